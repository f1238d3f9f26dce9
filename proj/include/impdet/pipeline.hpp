#pragma once

// End-to-end detection on one scene: BEV seeds -> shifted candidates ->
// cube NMS -> local samples -> implicit assignment -> boundary -> (optional)
// refinement -> rotated NMS. Oracle mode uses ground truth for the shift,
// centerness and implicit values; learned mode uses a trained Model.

#include <cstdint>
#include <optional>
#include <vector>

#include "impdet/boundary.hpp"
#include "impdet/candidates.hpp"
#include "impdet/eval.hpp"
#include "impdet/features.hpp"
#include "impdet/implicit.hpp"
#include "impdet/parallel.hpp"
#include "impdet/refine.hpp"
#include "impdet/scenegen.hpp"

namespace impdet {

struct Model {
    ShifterModel shifter;
    CenternessHead centerness;
    KernelGenerator generator{kFeatureWidth};
    RefineHead refine;
};

struct PipelineConfig {
    SampleConfig sample;
    BoundaryConfig boundary;
    double seed_cell = 0.5;
    std::size_t top_k = kDefaultTopK;
    double conf_t = 0.3;
    double nms_iou = 0.1;
    bool nms_3d = false;
    bool refine = true;  // learned mode only

    void validate() const {
        sample.validate();
        boundary.validate();
        if (!(seed_cell > 0.0)) throw InvalidArgument("seed cell size must be positive");
        if (top_k < 1) throw InvalidArgument("top_k must be >= 1");
        require_unit(conf_t, "confidence threshold");
        require_unit(nms_iou, "NMS IoU threshold");
    }
};

// Sampling seed used for scene i of a batch run.
inline std::uint64_t pipeline_seed(std::uint64_t base, std::size_t scene_index) {
    return base + static_cast<std::uint64_t>(scene_index) * 7919;
}

struct PipelineResult {
    std::vector<Candidate> candidates;  // after cube NMS
    std::vector<FitResult> fits;        // one per proposal
    std::vector<Detection> proposals;   // before confidence filter / NMS, descending confidence
    std::vector<Detection> detections;  // after detection_nms
    std::vector<std::size_t> kept;      // proposal indices of the detections
};

namespace detail {

inline std::size_t best_box_for(const Point3& p, std::span<const OrientedBox3> boxes) {
    std::size_t best = boxes.size();
    double best_c = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const double c = centerness(p, boxes[i]);
        if (c > best_c) {
            best_c = c;
            best = i;
        }
    }
    return best;
}

}  // namespace detail

inline PipelineResult run_pipeline(const Scene& scene, const PipelineConfig& cfg, const Model* model = nullptr,
                                   std::uint64_t seed = 0) {
    cfg.validate();
    PipelineResult r;
    if (scene.cloud.size() == 0) return r;
    const bool learned = model != nullptr;
    const GridIndex index(scene.cloud.points, 1.0);
    const SeedGrid grid =
        make_seed_grid(scene.cloud, cfg.seed_cell, learned ? default_seed_provider() : FeatureProvider{});

    std::vector<Candidate> cands;
    if (learned) {
        const Shifter s = refeaturing_shifter(learned_shifter(model->shifter), scene.cloud, index,
                                              default_seed_provider());
        cands = shift_candidates(grid, s, learned_scorer(model->centerness));
    } else {
        cands = shift_candidates(grid, oracle_shifter(scene.boxes), oracle_scorer(scene.boxes));
    }
    r.candidates = cube_nms(std::move(cands), cfg.top_k);

    std::vector<Feature> features;
    if (learned) features = point_features(scene.cloud, index, default_point_provider());

    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
        const Candidate& c = r.candidates[i];
        const LocalSample sample = build_local_sample(c, scene.cloud, index, features, cfg.sample, seed + i);
        ImplicitAssignment a;
        if (learned) {
            a = assign_values(sample, condition_kernels(c, model->generator), cfg.boundary.threshold);
        } else {
            const std::size_t b = detail::best_box_for(c.position, scene.boxes);
            if (b == scene.boxes.size()) continue;
            a = oracle_assignment(sample, scene.boxes[b], cfg.boundary.threshold);
        }
        FitResult fit;
        try {
            fit = generate_boundary(sample, a, cfg.boundary);
        } catch (const NoInsidePoints&) {
            continue;
        }
        Detection d{fit.box, c.centerness, "Car"};
        if (learned && cfg.refine) {
            const auto occ = aggregate(fit.box, sample, a);
            const RefineOutput out = model->refine.forward(occ.descriptor);
            d.box = apply_refinement(fit.box, out.box_delta, out.direction);
            d.confidence = out.confidence;
        }
        r.fits.push_back(fit);
        r.proposals.push_back(d);
    }
    std::vector<std::size_t> order(r.proposals.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return r.proposals[a].confidence > r.proposals[b].confidence;
    });
    std::vector<Detection> props;
    std::vector<FitResult> fits;
    for (std::size_t k : order) {
        props.push_back(r.proposals[k]);
        fits.push_back(r.fits[k]);
    }
    r.proposals = std::move(props);
    r.fits = std::move(fits);
    r.kept = detection_nms_indices(r.proposals, cfg.conf_t, cfg.nms_iou, cfg.nms_3d);
    for (std::size_t k : r.kept) r.detections.push_back(r.proposals[k]);
    return r;
}

// Best IoU of each gt box against any proposal (0 when none overlaps).
inline std::vector<double> best_ious(std::span<const Detection> proposals, std::span<const OrientedBox3> gt) {
    std::vector<double> out;
    for (const OrientedBox3& g : gt) {
        double best = 0.0;
        for (const Detection& d : proposals) best = std::max(best, iou_3d(d.box, g));
        out.push_back(best);
    }
    return out;
}

struct AblationRow {
    std::size_t h = 0;
    double mean_iou = 0.0;
    double recall_07 = 0.0;
};

// Oracle-value pipeline per h; mean best-IoU per gt box and recall at IoU 0.7
// (top-100 proposals), pooled over scenes.
inline std::vector<AblationRow> run_ablation_h(std::span<const Scene> scenes, std::span<const std::size_t> h_values,
                                               PipelineConfig cfg = {}, std::uint64_t seed = 0, std::size_t jobs = 1) {
    for (std::size_t h : h_values)
        if (h < 1) throw InvalidArgument("h values must be >= 1");
    std::vector<AblationRow> rows;
    for (std::size_t h : h_values) {
        cfg.boundary.h = h;
        struct PerScene {
            std::vector<double> ious;
            std::size_t hits = 0;
        };
        const auto per = parallel_map(scenes.size(), jobs, [&](std::size_t si) {
            const auto res = run_pipeline(scenes[si], cfg, nullptr, pipeline_seed(seed, si));
            PerScene p;
            p.ious = best_ious(res.proposals, scenes[si].boxes);
            p.hits = recall_hits(res.proposals, scenes[si].boxes, 0.7, 100);
            return p;
        });
        std::vector<double> all;
        std::size_t hits = 0, total = 0;
        for (std::size_t si = 0; si < per.size(); ++si) {
            all.insert(all.end(), per[si].ious.begin(), per[si].ious.end());
            hits += per[si].hits;
            total += scenes[si].boxes.size();
        }
        AblationRow row;
        row.h = h;
        row.mean_iou = summarize(all).mean;
        row.recall_07 = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace impdet
