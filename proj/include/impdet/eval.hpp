#pragma once

// Detection evaluation: confidence filter + rotated NMS, recall, interpolated
// AP (R11/R40), distance bands, and the representation-robustness
// experiments (centre shifts vs masked implicit assignments).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "impdet/boundary.hpp"
#include "impdet/geometry.hpp"
#include "impdet/implicit.hpp"
#include "impdet/parallel.hpp"
#include "impdet/scenegen.hpp"

namespace impdet {

struct Detection {
    OrientedBox3 box;
    double confidence = 0.0;
    std::string label = "Car";
};

inline void require_unit(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument(std::string(what) + " must lie in [0, 1]");
}

// Drops detections below conf_t, then greedy suppression in descending
// confidence: a box is removed when its IoU with a kept box exceeds iou_t.
// Returns indices into dets, in kept (descending confidence) order.
inline std::vector<std::size_t> detection_nms_indices(std::span<const Detection> dets, double conf_t = 0.3,
                                                      double iou_t = 0.1, bool use_3d = false) {
    require_unit(conf_t, "confidence threshold");
    require_unit(iou_t, "NMS IoU threshold");
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < dets.size(); ++i)
        if (dets[i].confidence >= conf_t) order.push_back(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
    std::vector<std::size_t> kept;
    for (std::size_t i : order) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
            return (use_3d ? iou_3d(dets[k].box, dets[i].box) : iou_bev(dets[k].box, dets[i].box)) > iou_t;
        });
        if (!suppressed) kept.push_back(i);
    }
    return kept;
}

inline std::vector<Detection> detection_nms(std::span<const Detection> dets, double conf_t = 0.3, double iou_t = 0.1,
                                            bool use_3d = false) {
    std::vector<Detection> kept;
    for (std::size_t i : detection_nms_indices(dets, conf_t, iou_t, use_3d)) kept.push_back(dets[i]);
    return kept;
}

// Number of gt boxes matched by the first top_k proposals (in the given
// order) at iou_3d >= iou_t. Each proposal takes its best unmatched gt.
inline std::size_t recall_hits(std::span<const OrientedBox3> proposals, std::span<const OrientedBox3> gt,
                               double iou_t = 0.7, std::size_t top_k = 100) {
    if (!(iou_t > 0.0 && iou_t <= 1.0)) throw InvalidArgument("recall IoU threshold must lie in (0, 1]");
    std::vector<bool> matched(gt.size(), false);
    const std::size_t n = std::min(top_k, proposals.size());
    for (std::size_t i = 0; i < n; ++i) {
        double best = -1.0;
        std::size_t best_j = gt.size();
        for (std::size_t j = 0; j < gt.size(); ++j) {
            if (matched[j]) continue;
            const double v = iou_3d(proposals[i], gt[j]);
            if (v >= iou_t && v > best) {
                best = v;
                best_j = j;
            }
        }
        if (best_j < gt.size()) matched[best_j] = true;
    }
    return static_cast<std::size_t>(std::count(matched.begin(), matched.end(), true));
}

inline std::size_t recall_hits(std::span<const Detection> proposals, std::span<const OrientedBox3> gt,
                               double iou_t = 0.7, std::size_t top_k = 100) {
    std::vector<OrientedBox3> boxes;
    for (const auto& d : proposals) boxes.push_back(d.box);
    return recall_hits(boxes, gt, iou_t, top_k);
}

// Fraction of gt boxes recalled; 0 when there is no gt.
inline double recall_at(std::span<const OrientedBox3> proposals, std::span<const OrientedBox3> gt,
                        double iou_t = 0.7, std::size_t top_k = 100) {
    const std::size_t hits = recall_hits(proposals, gt, iou_t, top_k);
    return gt.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(gt.size());
}

inline double recall_at(std::span<const Detection> proposals, std::span<const OrientedBox3> gt, double iou_t = 0.7,
                        std::size_t top_k = 100) {
    const std::size_t hits = recall_hits(proposals, gt, iou_t, top_k);
    return gt.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(gt.size());
}

enum class ApMode { R11, R40 };

inline std::string to_string(ApMode m) { return m == ApMode::R11 ? "R11" : "R40"; }

inline ApMode parse_ap_mode(const std::string& s) {
    if (s == "R11" || s == "r11") return ApMode::R11;
    if (s == "R40" || s == "r40") return ApMode::R40;
    throw InvalidArgument("unknown AP mode '" + s + "'");
}

inline std::vector<double> recall_positions(ApMode m) {
    std::vector<double> r;
    if (m == ApMode::R11) {
        for (int i = 0; i <= 10; ++i) r.push_back(i / 10.0);
    } else {
        for (int i = 1; i <= 40; ++i) r.push_back(i / 40.0);
    }
    return r;
}

struct PrPoint {
    double recall = 0.0;
    double precision = 1.0;
};

struct PrCurve {
    std::vector<PrPoint> points;    // (0, 1) anchor, then one per ranked detection
    std::vector<double> sampled;    // interpolated precision at each recall position
    double ap = 0.0;
    ApMode mode = ApMode::R40;
};

// Per-rank TP flags after greedy matching in descending confidence.
inline std::vector<bool> match_detections(std::span<const Detection> ranked, std::span<const OrientedBox3> gt,
                                          double iou_t) {
    std::vector<bool> tp(ranked.size(), false);
    std::vector<bool> used(gt.size(), false);
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        double best = -1.0;
        std::size_t best_j = gt.size();
        for (std::size_t j = 0; j < gt.size(); ++j) {
            if (used[j]) continue;
            const double v = iou_3d(ranked[i].box, gt[j]);
            if (v >= iou_t && v > best) {
                best = v;
                best_j = j;
            }
        }
        if (best_j < gt.size()) {
            used[best_j] = true;
            tp[i] = true;
        }
    }
    return tp;
}

// Interpolated AP: precision envelope max_{r' >= r} p(r') sampled at the
// recall positions and averaged. The curve starts from (recall 0, precision 1).
// No detections, no gt, or no true positive gives AP 0.
inline PrCurve pr_from_matches(const std::vector<bool>& tp, std::size_t n_gt, ApMode mode) {
    PrCurve c;
    c.mode = mode;
    c.points.push_back({0.0, 1.0});
    const auto pos = recall_positions(mode);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < tp.size(); ++i) {
        hits += tp[i] ? 1 : 0;
        c.points.push_back({n_gt ? static_cast<double>(hits) / static_cast<double>(n_gt) : 0.0,
                            static_cast<double>(hits) / static_cast<double>(i + 1)});
    }
    if (hits == 0 || n_gt == 0) {
        c.sampled.assign(pos.size(), 0.0);
        return c;
    }
    for (double r : pos) {
        double p = 0.0;
        for (const PrPoint& q : c.points)
            if (q.recall >= r - 1e-12) p = std::max(p, q.precision);
        c.sampled.push_back(p);
    }
    c.ap = std::accumulate(c.sampled.begin(), c.sampled.end(), 0.0) / static_cast<double>(c.sampled.size());
    return c;
}

inline PrCurve average_precision(std::vector<Detection> dets, std::span<const OrientedBox3> gt, double iou_t = 0.7,
                                 ApMode mode = ApMode::R40) {
    if (!(iou_t > 0.0 && iou_t <= 1.0)) throw InvalidArgument("AP IoU threshold must lie in (0, 1]");
    std::stable_sort(dets.begin(), dets.end(),
                     [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
    return pr_from_matches(match_detections(dets, gt, iou_t), gt.size(), mode);
}

// Multi-scene AP: detections are matched within their own scene, then ranked
// jointly by confidence.
struct SceneDetections {
    std::vector<Detection> detections;
    std::vector<OrientedBox3> gt;
};

inline PrCurve average_precision(std::span<const SceneDetections> scenes, double iou_t = 0.7,
                                 ApMode mode = ApMode::R40) {
    struct Ranked {
        double conf;
        bool tp;
    };
    std::vector<Ranked> all;
    std::size_t n_gt = 0;
    for (const auto& s : scenes) {
        std::vector<Detection> d = s.detections;
        std::stable_sort(d.begin(), d.end(),
                         [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
        const auto tp = match_detections(d, s.gt, iou_t);
        for (std::size_t i = 0; i < d.size(); ++i) all.push_back({d[i].confidence, tp[i]});
        n_gt += s.gt.size();
    }
    std::stable_sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) { return a.conf > b.conf; });
    std::vector<bool> flags;
    for (const Ranked& r : all) flags.push_back(r.tp);
    return pr_from_matches(flags, n_gt, mode);
}

// ---------------------------------------------------------------------------
// Distance bands (BEV range from the sensor origin).

struct DistanceBand {
    std::string name;
    double lo = 0.0;
    double hi = 0.0;  // exclusive; infinity for the last band
    bool contains(const OrientedBox3& b) const {
        const double r = std::hypot(b.center.x, b.center.y);
        return r >= lo && r < hi;
    }
};

inline std::vector<DistanceBand> default_bands() {
    return {{"0-30m", 0.0, 30.0}, {"30-50m", 30.0, 50.0}, {"50m-inf", 50.0, std::numeric_limits<double>::infinity()}};
}

inline std::vector<SceneDetections> restrict_to_band(std::span<const SceneDetections> scenes, const DistanceBand& band) {
    std::vector<SceneDetections> out;
    for (const auto& s : scenes) {
        SceneDetections r;
        for (const auto& d : s.detections)
            if (band.contains(d.box)) r.detections.push_back(d);
        for (const auto& g : s.gt)
            if (band.contains(g)) r.gt.push_back(g);
        out.push_back(std::move(r));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Distribution summaries

struct Summary {
    std::size_t count = 0;
    double mean = 0.0;
    double min = 0.0;
    double q10 = 0.0;
    double q25 = 0.0;
    double median = 0.0;
    double q75 = 0.0;
    double q90 = 0.0;
    double max = 0.0;
    double frac_below_07 = 0.0;
    std::vector<double> values;
};

// Linear-interpolated quantile of sorted data.
inline double quantile_sorted(std::span<const double> s, double q) {
    if (s.empty()) return 0.0;
    const double pos = q * static_cast<double>(s.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double f = pos - static_cast<double>(i);
    return i + 1 < s.size() ? s[i] * (1.0 - f) + s[i + 1] * f : s[i];
}

inline Summary summarize(std::vector<double> v) {
    Summary s;
    s.count = v.size();
    s.values = v;
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.min = v.front();
    s.max = v.back();
    s.q10 = quantile_sorted(v, 0.10);
    s.q25 = quantile_sorted(v, 0.25);
    s.median = quantile_sorted(v, 0.50);
    s.q75 = quantile_sorted(v, 0.75);
    s.q90 = quantile_sorted(v, 0.90);
    s.frac_below_07 = static_cast<double>(std::count_if(v.begin(), v.end(), [](double x) { return x < 0.7; })) /
                      static_cast<double>(v.size());
    return s;
}

// ---------------------------------------------------------------------------
// Robustness experiments

// IoU between each gt box and `trials` centre-perturbed copies of it.
inline Summary robustness_parametric(std::span<const Scene> scenes, const Point3& shifts = {0.1, 0.2, 0.3},
                                     std::size_t trials = 100, std::uint64_t seed = 0) {
    if (trials < 1) throw InvalidArgument("robustness needs at least one trial");
    std::vector<double> ious;
    std::mt19937_64 rng(seed);
    for (const Scene& s : scenes)
        for (const OrientedBox3& b : s.boxes)
            for (std::size_t t = 0; t < trials; ++t) ious.push_back(iou_3d(b, perturb_box_center(b, shifts, rng())));
    return summarize(std::move(ious));
}

// Zeroes a uniformly random floor(fraction * n_inside) of the inside entries.
inline ImplicitAssignment mask_assignment(const ImplicitAssignment& a, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw InvalidArgument("mask fraction must lie in [0, 1)");
    std::vector<std::size_t> inside;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a.inside[i]) inside.push_back(i);
    const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(inside.size()) + 1e-9));
    std::mt19937_64 rng(seed);
    std::shuffle(inside.begin(), inside.end(), rng);
    std::vector<double> values = a.values;
    for (std::size_t i = 0; i < k; ++i) values[inside[i]] = 0.0;
    return make_assignment(std::move(values), a.threshold);
}

// Geometry-only local sample at the gt centre with oracle labels.
inline std::pair<LocalSample, ImplicitAssignment> oracle_sample(const Scene& scene, const GridIndex& index,
                                                                const OrientedBox3& gt, const SampleConfig& cfg,
                                                                std::uint64_t seed) {
    Candidate c;
    c.position = gt.center;
    c.centerness = 1.0;
    LocalSample s = build_local_sample(c, scene.cloud, index, {}, cfg, seed);
    ImplicitAssignment a = oracle_assignment(s, gt);
    return {std::move(s), std::move(a)};
}

inline double fit_iou_or_zero(const LocalSample& s, const ImplicitAssignment& a, const BoundaryConfig& bcfg,
                              const OrientedBox3& gt) {
    try {
        return iou_3d(generate_boundary(s, a, bcfg).box, gt);
    } catch (const NoInsidePoints&) {
        return 0.0;
    }
}

// For each mask fraction: oracle assignment around every gt centre, random
// masking of the inside set (raw and virtual points), boundary fit, IoU with
// the gt. Boxes left without inside points count as IoU 0.
inline std::vector<Summary> robustness_implicit(std::span<const Scene> scenes, std::span<const double> fractions,
                                                const BoundaryConfig& bcfg = {}, const SampleConfig& scfg = {},
                                                std::uint64_t seed = 0, std::size_t jobs = 1) {
    for (double f : fractions)
        if (!(f >= 0.0 && f < 1.0)) throw InvalidArgument("mask fraction must lie in [0, 1)");
    bcfg.validate();
    auto per_scene = parallel_map(scenes.size(), jobs, [&](std::size_t si) {
        const Scene& scene = scenes[si];
        const GridIndex index(scene.cloud.points, 1.0);
        std::vector<std::vector<double>> ious(fractions.size());
        for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
            const std::uint64_t box_seed = seed ^ (si * 0x100000001b3ULL + b * 0x9e3779b9ULL);
            const auto [sample, assignment] = oracle_sample(scene, index, scene.boxes[b], scfg, box_seed);
            for (std::size_t k = 0; k < fractions.size(); ++k) {
                const auto masked = mask_assignment(assignment, fractions[k], box_seed + k + 1);
                ious[k].push_back(fit_iou_or_zero(sample, masked, bcfg, scene.boxes[b]));
            }
        }
        return ious;
    });
    std::vector<Summary> out;
    for (std::size_t k = 0; k < fractions.size(); ++k) {
        std::vector<double> all;
        for (const auto& s : per_scene) all.insert(all.end(), s[k].begin(), s[k].end());
        out.push_back(summarize(std::move(all)));
    }
    return out;
}

}  // namespace impdet
