#include <gtest/gtest.h>

#include <random>

#include "impdet/eval.hpp"
#include "impdet/pipeline.hpp"
#include "oracles.hpp"

using namespace impdet;

namespace {

Detection det(Point3 c, double conf, double yaw = 0.0, Dims d = {4, 2, 1.5}) {
    return Detection{make_box(c, d, yaw), conf, "Car"};
}

std::vector<Detection> random_dets(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 30), y(0, kTwoPi), c(0, 1);
    std::vector<Detection> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(det({u(rng), u(rng), 0}, c(rng), y(rng)));
    return out;
}

// Independent AP: ranks, greedy matching against gt by the oracle IoU supplied,
// precision envelope at the recall positions.
double oracle_ap(std::vector<std::pair<double, bool>> ranked, std::size_t n_gt, const std::vector<double>& positions) {
    std::stable_sort(ranked.begin(), ranked.end(), [](auto& a, auto& b) { return a.first > b.first; });
    std::vector<std::pair<double, double>> pr{{0.0, 1.0}};
    std::size_t tp = 0;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        tp += ranked[i].second;
        pr.push_back({double(tp) / n_gt, double(tp) / (i + 1)});
    }
    if (tp == 0) return 0.0;
    double s = 0;
    for (double r : positions) {
        double best = 0;
        for (auto [rr, pp] : pr)
            if (rr >= r - 1e-12) best = std::max(best, pp);
        s += best;
    }
    return s / positions.size();
}

// Closed surface grid of a box as a point cloud.
PointCloud surface_cloud(std::span<const OrientedBox3> boxes, int n) {
    PointCloud c;
    for (const OrientedBox3& b : boxes)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double s = -0.5 + double(i) / (n - 1), t = -0.5 + double(j) / (n - 1);
                for (double sign : {-0.5, 0.5}) {
                    c.push_back(from_box_frame({sign * b.dims.l, s * b.dims.w, t * b.dims.h}, b), 0.5);
                    c.push_back(from_box_frame({s * b.dims.l, sign * b.dims.w, t * b.dims.h}, b), 0.5);
                    c.push_back(from_box_frame({s * b.dims.l, t * b.dims.w, sign * b.dims.h}, b), 0.5);
                }
            }
    return c;
}

}  // namespace

TEST(DetectionNms, Examples) {
    auto kept = detection_nms(std::vector<Detection>{det({0, 0, 0}, 0.9), det({0, 0, 0}, 0.8)});
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].confidence, 0.9);
    EXPECT_TRUE(detection_nms(std::vector<Detection>{det({0, 0, 0}, 0.2), det({9, 0, 0}, 0.29)}).empty());
    kept = detection_nms(std::vector<Detection>{det({0, 0, 0}, 0.5), det({10, 0, 0}, 0.9), det({20, 0, 0}, 0.7)});
    ASSERT_EQ(kept.size(), 3u);
    EXPECT_EQ(kept[0].confidence, 0.9);
    EXPECT_EQ(kept[1].confidence, 0.7);
    EXPECT_EQ(kept[2].confidence, 0.5);
    EXPECT_THROW(detection_nms(std::vector<Detection>{}, 1.5), InvalidArgument);
}

TEST(DetectionNms, Properties) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto dets = random_dets(150, seed);
        for (bool use_3d : {false, true}) {
            const auto idx = detection_nms_indices(dets, 0.3, 0.1, use_3d);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                EXPECT_GE(dets[idx[i]].confidence, 0.3);
                if (i) {
                    EXPECT_LE(dets[idx[i]].confidence, dets[idx[i - 1]].confidence);
                }
                for (std::size_t j = 0; j < i; ++j) {
                    const auto& a = dets[idx[i]].box;
                    const auto& b = dets[idx[j]].box;
                    EXPECT_LE(use_3d ? iou_3d(a, b) : iou_bev(a, b), 0.1);
                }
            }
            // Every dropped detection above the threshold overlaps a kept one of higher confidence.
            for (std::size_t i = 0; i < dets.size(); ++i) {
                if (dets[i].confidence < 0.3 || std::find(idx.begin(), idx.end(), i) != idx.end()) continue;
                bool covered = false;
                for (std::size_t k : idx)
                    covered |= dets[k].confidence >= dets[i].confidence &&
                               (use_3d ? iou_3d(dets[k].box, dets[i].box) : iou_bev(dets[k].box, dets[i].box)) > 0.1;
                EXPECT_TRUE(covered);
            }
        }
    }
}

TEST(RecallAt, Examples) {
    const std::vector<OrientedBox3> gt{make_box({0, 0, 0}, {4, 2, 1.5}, 0), make_box({20, 0, 0}, {4, 2, 1.5}, 0)};
    EXPECT_EQ(recall_at(gt, gt), 1.0);
    EXPECT_EQ(recall_at(std::vector<OrientedBox3>{}, gt), 0.0);
    // Shift along x so that IoU = (4 - s) / (4 + s) = 0.75.
    const double s = 4.0 / 7.0;
    const auto near = make_box({s, 0, 0}, {4, 2, 1.5}, 0);
    ASSERT_NEAR(iou_3d(near, gt[0]), 0.75, 1e-12);
    EXPECT_EQ(recall_at(std::vector<OrientedBox3>{near}, gt), 0.5);
    EXPECT_EQ(recall_at(std::vector<OrientedBox3>{near, near}, gt), 0.5);
    EXPECT_EQ(recall_at(std::vector<OrientedBox3>{near}, gt, 0.8), 0.0);
    EXPECT_EQ(recall_at(gt, std::vector<OrientedBox3>{}), 0.0);
    EXPECT_THROW(recall_at(gt, gt, 0.0), InvalidArgument);
}

TEST(RecallAt, MonotoneInTopKAndThreshold) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> j(-0.6, 0.6);
    std::vector<OrientedBox3> gt, props;
    for (int i = 0; i < 30; ++i) gt.push_back(make_box({10.0 * i, 0, 0}, {4, 2, 1.5}, 0.3));
    for (int k = 0; k < 3; ++k)
        for (const auto& g : gt) props.push_back(make_box(g.center + Point3{j(rng), j(rng), 0}, g.dims, g.yaw));
    double prev = 0;
    for (std::size_t k : {1, 5, 10, 30, 60, 90}) {
        const double r = recall_at(props, gt, 0.7, k);
        EXPECT_GE(r, prev);
        prev = r;
    }
    prev = 1.0;
    for (double t : {0.3, 0.5, 0.7, 0.9}) {
        const double r = recall_at(props, gt, t);
        EXPECT_LE(r, prev);
        prev = r;
    }
}

TEST(AveragePrecision, Examples) {
    const std::vector<OrientedBox3> gt{make_box({0, 0, 0}, {4, 2, 1.5}, 0)};
    for (ApMode m : {ApMode::R11, ApMode::R40})
        EXPECT_DOUBLE_EQ(average_precision({Detection{gt[0], 0.9, "Car"}}, gt, 0.7, m).ap, 1.0);
    const auto r11 = average_precision({det({30, 0, 0}, 0.9), Detection{gt[0], 0.8, "Car"}}, gt, 0.7, ApMode::R11);
    EXPECT_NEAR(r11.ap, 6.0 / 11.0, 1e-12);
    EXPECT_NEAR(r11.ap, 0.545, 1e-3);
    EXPECT_EQ(average_precision({}, gt).ap, 0.0);
    EXPECT_EQ(average_precision({Detection{gt[0], 0.9, "Car"}}, {}).ap, 0.0);
    EXPECT_EQ(recall_positions(ApMode::R11).size(), 11u);
    EXPECT_EQ(recall_positions(ApMode::R40).front(), 1.0 / 40.0);
    EXPECT_EQ(parse_ap_mode("r40"), ApMode::R40);
    EXPECT_THROW(parse_ap_mode("R20"), InvalidArgument);
}

TEST(AveragePrecision, MatchesIndependentComputation) {
    // Disjoint gt boxes; each detection is either an exact copy of an unused gt
    // box or far from all of them, so matching is unambiguous.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> c(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<OrientedBox3> gt;
        for (int i = 0; i < 10; ++i) gt.push_back(make_box({10.0 * i, 0, 0}, {4, 2, 1.5}, 0));
        std::vector<Detection> dets;
        std::vector<std::pair<double, bool>> ranked;
        for (int i = 0; i < 10; ++i) {
            if (c(rng) < 0.7) {
                dets.push_back(Detection{gt[i], c(rng), "Car"});
                ranked.push_back({dets.back().confidence, true});
            }
            if (c(rng) < 0.5) {
                dets.push_back(det({10.0 * i, 50, 0}, c(rng)));
                ranked.push_back({dets.back().confidence, false});
            }
        }
        for (ApMode m : {ApMode::R11, ApMode::R40}) {
            const auto pr = average_precision(dets, gt, 0.7, m);
            EXPECT_NEAR(pr.ap, oracle_ap(ranked, gt.size(), recall_positions(m)), 1e-12);
            EXPECT_GE(pr.ap, 0.0);
            EXPECT_LE(pr.ap, 1.0);
            for (std::size_t i = 1; i < pr.points.size(); ++i) EXPECT_GE(pr.points[i].recall, pr.points[i - 1].recall);
        }
        const double a11 = average_precision(dets, gt, 0.7, ApMode::R11).ap;
        const double a40 = average_precision(dets, gt, 0.7, ApMode::R40).ap;
        EXPECT_LE(std::abs(a11 - a40), 0.1);
    }
}

TEST(AveragePrecision, MultiSceneEqualsConcatenatedDisjointScenes) {
    std::vector<SceneDetections> scenes(2);
    scenes[0].gt = {make_box({0, 0, 0}, {4, 2, 1.5}, 0)};
    scenes[0].detections = {Detection{scenes[0].gt[0], 0.6, "Car"}, det({0, 40, 0}, 0.9)};
    scenes[1].gt = {make_box({100, 0, 0}, {4, 2, 1.5}, 0)};
    scenes[1].detections = {Detection{scenes[1].gt[0], 0.7, "Car"}};
    std::vector<Detection> all;
    std::vector<OrientedBox3> gt;
    for (const auto& s : scenes) {
        all.insert(all.end(), s.detections.begin(), s.detections.end());
        gt.insert(gt.end(), s.gt.begin(), s.gt.end());
    }
    EXPECT_DOUBLE_EQ(average_precision(scenes).ap, average_precision(all, gt).ap);
    const auto bands = default_bands();
    ASSERT_EQ(bands.size(), 3u);
    const auto near = restrict_to_band(scenes, bands[0]);
    EXPECT_EQ(near[0].gt.size(), 1u);
    EXPECT_EQ(near[1].gt.size(), 0u);
    EXPECT_EQ(near[0].detections.size(), 1u);
}

TEST(Summary, Quantiles) {
    const auto s = summarize({0.5, 0.9, 0.1, 0.7, 0.3});
    EXPECT_EQ(s.count, 5u);
    EXPECT_DOUBLE_EQ(s.mean, 0.5);
    EXPECT_DOUBLE_EQ(s.median, 0.5);
    EXPECT_DOUBLE_EQ(s.min, 0.1);
    EXPECT_DOUBLE_EQ(s.max, 0.9);
    EXPECT_DOUBLE_EQ(s.q25, 0.3);
    EXPECT_DOUBLE_EQ(s.frac_below_07, 0.6);
    EXPECT_EQ(summarize({}).count, 0u);
}

TEST(RobustnessParametric, ZeroShiftAndMonotone) {
    SceneConfig c;
    c.object_count = 5;
    const auto scenes = generate_scenes(c, 5, 1);
    const auto zero = robustness_parametric(scenes, {0, 0, 0}, 10, 1);
    EXPECT_EQ(zero.count, 250u);
    EXPECT_NEAR(zero.min, 1.0, 1e-12);
    double prev = 1.0;
    for (double k : {0.25, 0.5, 1.0, 2.0}) {
        const auto s = robustness_parametric(scenes, {0.1 * k, 0.2 * k, 0.3 * k}, 100, 2);
        EXPECT_LT(s.mean, prev);
        prev = s.mean;
    }
    EXPECT_THROW(robustness_parametric(scenes, {0.1, 0.2, 0.3}, 0), InvalidArgument);
}

TEST(RobustnessParametric, WorstCornerCarClosedForm) {
    const auto b = make_box({10, 0, 0}, {3.9, 1.6, 1.56}, 0.0);
    const auto s = make_box({10.1, 0.2, 0.3}, {3.9, 1.6, 1.56}, 0.0);
    const double inter = 3.8 * 1.4 * 1.26, vol = 3.9 * 1.6 * 1.56;
    EXPECT_NEAR(iou_3d(b, s), inter / (2 * vol - inter), 1e-12);
    EXPECT_NEAR(iou_3d(b, s), 0.52510, 1e-5);
}

TEST(RobustnessImplicit, DenseCoverage) {
    SceneConfig c;
    c.object_count = 4;
    c.density_exponent = 0.0;
    c.points_per_object_at_10m = 400;
    const auto scenes = generate_scenes(c, 10, 3);
    const std::vector<double> fr{0.0, 0.4};
    const auto s = robustness_implicit(scenes, fr, BoundaryConfig{}, SampleConfig{}, 4);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].count, 40u);
    EXPECT_GE(s[1].mean, s[0].mean - 0.1);
    EXPECT_GT(s[0].mean, 0.7);
    EXPECT_THROW(robustness_implicit(scenes, std::vector<double>{1.0}), InvalidArgument);
    // Parallel evaluation gives the identical result.
    const auto par = robustness_implicit(scenes, fr, BoundaryConfig{}, SampleConfig{}, 4, 3);
    EXPECT_EQ(par[1].values, s[1].values);
}

TEST(RobustnessImplicit, FullyMaskedCountsAsMiss) {
    const auto gt = make_box({10, 0, -1}, {4, 2, 1.5}, 0.0);
    LocalSample s;
    s.candidate.position = gt.center;
    s.raw_points = {gt.center};
    s.raw_features = {Feature{}};
    s.raw_indices = {0};
    EXPECT_EQ(fit_iou_or_zero(s, make_assignment({0.0}), BoundaryConfig{}, gt), 0.0);
    const auto a = make_assignment({1.0, 1.0, 0.0, 1.0});
    const auto m = mask_assignment(a, 0.4, 1);
    EXPECT_EQ(std::count(m.inside.begin(), m.inside.end(), true), 2);
    EXPECT_EQ(m.values[2], 0.0);
}

TEST(AblationH, RowsAndAngleResolution) {
    SceneConfig c;
    c.object_count = 4;
    const auto scenes = generate_scenes(c, 6, 7);
    const std::vector<std::size_t> hs{1, 3, 7};
    const auto rows = run_ablation_h(scenes, hs, PipelineConfig{}, 1);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[2].h, 7u);
    EXPECT_GT(rows[2].mean_iou, rows[0].mean_iou);
    EXPECT_GE(rows[2].mean_iou, rows[1].mean_iou);
    EXPECT_THROW(run_ablation_h(scenes, std::vector<std::size_t>{0}), InvalidArgument);
}

TEST(AblationH, AxisAlignedScenesIndependentOfH) {
    std::vector<Scene> scenes(3);
    for (std::size_t k = 0; k < scenes.size(); ++k) {
        for (int i = 0; i < 3; ++i)
            scenes[k].boxes.push_back(make_box({8.0 + 10.0 * i, 5.0 * k - 5, -1}, {3.9, 1.6, 1.5}, 0.0));
        scenes[k].labels.assign(3, "Car");
        scenes[k].cloud = surface_cloud(scenes[k].boxes, 12);
    }
    const std::vector<std::size_t> hs{1, 3, 5, 7, 9};
    const auto rows = run_ablation_h(scenes, hs, PipelineConfig{}, 2);
    for (const auto& r : rows) {
        EXPECT_NEAR(r.mean_iou, rows[0].mean_iou, 1e-9);
        EXPECT_EQ(r.recall_07, 1.0);
    }
}

TEST(Pipeline, OracleModeRecallsDenseScenes) {
    SceneConfig c;
    c.object_count = 5;
    const Scene s = generate_scene(c);
    const auto r = run_pipeline(s, PipelineConfig{}, nullptr, 3);
    EXPECT_FALSE(r.proposals.empty());
    EXPECT_EQ(r.kept.size(), r.detections.size());
    for (std::size_t i = 1; i < r.proposals.size(); ++i)
        EXPECT_LE(r.proposals[i].confidence, r.proposals[i - 1].confidence);
    for (std::size_t i = 0; i < r.kept.size(); ++i) EXPECT_EQ(r.detections[i].box, r.proposals[r.kept[i]].box);
    EXPECT_GE(recall_at(r.proposals, s.boxes, 0.5), 0.8);
    const auto again = run_pipeline(s, PipelineConfig{}, nullptr, 3);
    EXPECT_EQ(again.proposals.size(), r.proposals.size());
    EXPECT_EQ(pipeline_seed(10, 2), 10u + 2u * 7919u);
    EXPECT_TRUE(run_pipeline(Scene{}, PipelineConfig{}).proposals.empty());
}
