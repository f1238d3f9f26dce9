#pragma once

// Six-term detection loss, finite-difference gradient checking and plain SGD
// loops for the learned components (shifter, centerness head, conditioned
// implicit classifier, refinement head).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "impdet/boundary.hpp"
#include "impdet/candidates.hpp"
#include "impdet/features.hpp"
#include "impdet/implicit.hpp"
#include "impdet/losses.hpp"
#include "impdet/pipeline.hpp"
#include "impdet/refine.hpp"
#include "impdet/scenegen.hpp"

namespace impdet {

struct LossWeights {
    double offset = 1.0;      // lambda1
    double centerness = 1.0;  // lambda2
    double implicit = 2.0;    // lambda3
    double cls = 1.0;         // lambda4
    double box = 2.0;         // lambda5
    double direction = 0.2;   // lambda6

    void validate() const {
        for (double v : {offset, centerness, implicit, cls, box, direction})
            if (!(v >= 0.0)) throw InvalidArgument("loss weights must be non-negative");
    }
};

// Targets for one batch. Pixel entries index the BEV seed grid; candidate
// entries index sampled candidate centres.
struct TrainBatch {
    std::vector<Point3> offset_targets;
    std::vector<double> centerness_targets;
    std::vector<std::size_t> positive_pixels;

    std::vector<std::vector<double>> implicit_targets;
    std::vector<std::size_t> positive_centers;
    std::vector<double> class_targets;
    std::vector<std::array<double, kBoxDeltaWidth>> box_targets;
    std::vector<int> direction_targets;
};

struct Predictions {
    std::vector<Point3> offsets;
    std::vector<double> centerness;
    std::vector<std::vector<double>> implicit_values;
    std::vector<double> confidence;
    std::vector<std::array<double, kBoxDeltaWidth>> box_deltas;
    std::vector<double> direction_prob;
};

struct LossBreakdown {
    double offset = 0.0;
    double centerness = 0.0;
    double implicit = 0.0;
    double cls = 0.0;
    double box = 0.0;
    double direction = 0.0;
    double total = 0.0;
    std::vector<std::string> warnings;
};

// Weighted six-term loss. Offset, box and direction terms run over positives;
// centerness and confidence terms run over every entry. Pixel terms are
// normalised by |positive pixels|, candidate terms by |positive centres|. An
// empty positive set makes its terms zero and records a warning.
inline LossBreakdown total_loss(const TrainBatch& b, const Predictions& p, const LossWeights& w = {},
                                FocalParams focal = {}) {
    w.validate();
    LossBreakdown out;
    const std::size_t n_pix = b.centerness_targets.size();
    if (p.centerness.size() != n_pix || p.offsets.size() != b.offset_targets.size())
        throw ShapeMismatch("pixel predictions and targets differ in size");
    const std::size_t n_cand = b.class_targets.size();
    if (p.confidence.size() != n_cand || p.implicit_values.size() != b.implicit_targets.size() ||
        p.box_deltas.size() != b.box_targets.size() || p.direction_prob.size() != b.direction_targets.size())
        throw ShapeMismatch("candidate predictions and targets differ in size");

    if (b.positive_pixels.empty()) {
        out.warnings.emplace_back("no positive pixels: offset and centerness terms set to 0");
    } else {
        const double inv = 1.0 / static_cast<double>(b.positive_pixels.size());
        for (std::size_t i : b.positive_pixels) {
            const Point3& a = p.offsets.at(i);
            const Point3& t = b.offset_targets.at(i);
            out.offset += smooth_l1(a.x, t.x) + smooth_l1(a.y, t.y) + smooth_l1(a.z, t.z);
        }
        out.offset *= inv;
        for (std::size_t i = 0; i < n_pix; ++i) out.centerness += focal_loss(p.centerness[i], b.centerness_targets[i], focal);
        out.centerness *= inv;
    }

    if (b.positive_centers.empty()) {
        out.warnings.emplace_back("no positive candidate centres: candidate terms set to 0");
    } else {
        const double inv = 1.0 / static_cast<double>(b.positive_centers.size());
        for (std::size_t i : b.positive_centers) {
            const auto& h = p.implicit_values.at(i);
            const auto& t = b.implicit_targets.at(i);
            if (h.size() != t.size()) throw ShapeMismatch("implicit values and targets differ in size");
            if (h.empty()) continue;
            double s = 0.0;
            for (std::size_t j = 0; j < h.size(); ++j) s += bce(h[j], t[j]);
            out.implicit += s / static_cast<double>(h.size());
            out.box += smooth_l1(p.box_deltas.at(i), b.box_targets.at(i));
            out.direction += bce(p.direction_prob.at(i), static_cast<double>(b.direction_targets.at(i)));
        }
        for (std::size_t i = 0; i < n_cand; ++i) out.cls += focal_loss(p.confidence[i], b.class_targets[i], focal);
        out.implicit *= inv;
        out.box *= inv;
        out.direction *= inv;
        out.cls *= inv;
    }
    out.total = w.offset * out.offset + w.centerness * out.centerness + w.implicit * out.implicit +
                w.cls * out.cls + w.box * out.box + w.direction * out.direction;
    return out;
}

// ---------------------------------------------------------------------------
// Gradient checking

// Returns the loss at `params`; fills `grad` with the analytic gradient when
// it is non-empty (grad arrives zeroed).
using LossFunction = std::function<double(std::span<const double> params, std::span<double> grad)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

// Central differences per parameter against the analytic gradient; relative
// error uses max(|a|, |n|, 1e-8) as denominator. `stride` > 1 checks every
// stride-th parameter.
inline GradCheckResult grad_check(const LossFunction& f, std::vector<double> params, double h = 1e-5,
                                  std::size_t stride = 1) {
    if (!(h >= 1e-6 && h <= 1e-3)) throw InvalidArgument("grad_check step must lie in [1e-6, 1e-3]");
    std::vector<double> analytic(params.size(), 0.0);
    f(params, analytic);
    GradCheckResult r;
    for (std::size_t i = 0; i < params.size(); i += std::max<std::size_t>(stride, 1)) {
        const double orig = params[i];
        params[i] = orig + h;
        const double up = f(params, {});
        params[i] = orig - h;
        const double down = f(params, {});
        params[i] = orig;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        const double err = std::abs(analytic[i] - numeric) / denom;
        if (err > r.max_rel_error) {
            r.max_rel_error = err;
            r.worst_index = i;
        }
        ++r.checked;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Per-component losses with analytic gradients

// Offset loss: summed smooth-L1 over positive seeds, divided by their count.
struct ShifterExample {
    Feature feature;
    Point3 target_offset;
};

inline double shifter_loss(std::span<const double> params, const ShifterModel& model,
                           std::span<const ShifterExample> batch, std::span<double> grad = {}) {
    if (batch.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& ex : batch) {
        const auto t = model.mlp().forward_with(params, ex.feature);
        const auto& y = t.output();
        const std::array<double, 3> tgt{ex.target_offset.x, ex.target_offset.y, ex.target_offset.z};
        std::array<double, 3> dy{};
        for (std::size_t c = 0; c < 3; ++c) {
            loss += smooth_l1(y[c], tgt[c]);
            dy[c] = inv * smooth_l1_grad(y[c], tgt[c]);
        }
        if (!grad.empty()) model.mlp().backward_with(params, t, dy, grad);
    }
    return loss * inv;
}

// Centerness loss: focal loss summed over every seed, divided by `positives`.
struct CenternessExample {
    Feature feature;
    double target = 0.0;
};

inline double centerness_loss(std::span<const double> params, const CenternessHead& head,
                              std::span<const CenternessExample> batch, std::size_t positives,
                              std::span<double> grad = {}, FocalParams focal = {}) {
    if (batch.empty() || positives == 0) return 0.0;
    const double inv = 1.0 / static_cast<double>(positives);
    double loss = 0.0;
    for (const auto& ex : batch) {
        const auto t = head.mlp().forward_with(params, ex.feature);
        const double p = nn::sigmoid(t.output()[0]);
        loss += focal_loss(p, ex.target, focal);
        if (!grad.empty()) {
            const double dz = inv * focal_loss_grad(p, ex.target, focal) * p * (1.0 - p);
            head.mlp().backward_with(params, t, std::span<const double>(&dz, 1), grad);
        }
    }
    return loss * inv;
}

// Implicit loss: per-sample mean BCE averaged over candidate samples.
struct ImplicitExample {
    LocalSample sample;
    std::vector<double> targets;
    OrientedBox3 gt_box;
};

inline double implicit_loss(std::span<const double> params, const KernelGenerator& gen,
                            std::span<const ImplicitExample> batch, std::span<double> grad = {}) {
    if (batch.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    std::vector<double> g(grad.empty() ? 0 : grad.size(), 0.0);
    for (const auto& ex : batch) {
        if (!grad.empty()) std::fill(g.begin(), g.end(), 0.0);
        loss += implicit_bce(params, gen, ex.sample, ex.targets, g);
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += inv * g[i];
    }
    return loss * inv;
}

// Confidence (focal), box residual (smooth-L1, positives only) and direction
// (BCE, positives only) of the refinement head, combined with the lambda
// weights and normalised by the positive count.
struct RefineExample {
    std::vector<double> descriptor;
    double class_target = 0.0;
    std::array<double, kBoxDeltaWidth> box_target{};
    int direction = 0;
};

struct RefineLossTerms {
    double cls = 0.0;
    double box = 0.0;
    double direction = 0.0;
};

inline double refine_loss(std::span<const double> params, const RefineHead& head,
                          std::span<const RefineExample> batch, const LossWeights& w, std::span<double> grad = {},
                          RefineLossTerms* terms = nullptr, FocalParams focal = {}) {
    std::size_t positives = 0;
    for (const auto& ex : batch) positives += ex.class_target > 0.0 ? 1 : 0;
    if (positives == 0) return 0.0;
    const double inv = 1.0 / static_cast<double>(positives);
    RefineLossTerms acc;
    for (const auto& ex : batch) {
        const auto t = head.forward_with(params, ex.descriptor);
        const bool pos = ex.class_target > 0.0;
        const double conf = t.out.confidence;
        acc.cls += focal_loss(conf, ex.class_target, focal);
        std::array<double, kBoxDeltaWidth> dbox{};
        double ddir = 0.0;
        if (pos) {
            acc.box += smooth_l1(t.out.box_delta, ex.box_target);
            acc.direction += bce(t.out.direction_prob, ex.direction);
            for (std::size_t c = 0; c < kBoxDeltaWidth; ++c)
                dbox[c] = w.box * inv * smooth_l1_grad(t.out.box_delta[c], ex.box_target[c]);
            const double q = t.out.direction_prob;
            ddir = w.direction * inv * bce_grad(q, ex.direction) * q * (1.0 - q);
        }
        if (!grad.empty()) {
            const double dcls = w.cls * inv * focal_loss_grad(conf, ex.class_target, focal) * conf * (1.0 - conf);
            head.backward_with(params, t, dcls, dbox, ddir, grad);
        }
    }
    acc.cls *= inv;
    acc.box *= inv;
    acc.direction *= inv;
    if (terms) *terms = acc;
    return w.cls * acc.cls + w.box * acc.box + w.direction * acc.direction;
}

// ---------------------------------------------------------------------------
// Training data

struct TrainDataConfig {
    SampleConfig sample;
    double seed_cell = 0.5;
    // Uniform jitter of training candidates around the box centre.
    Point3 candidate_jitter{0.3, 0.3, 0.15};
};

// Candidate at a jittered box centre with the seed-provider feature there.
inline Candidate jittered_candidate(const OrientedBox3& box, const PointCloud& cloud, const GridIndex& index,
                                    const Point3& jitter, std::mt19937_64& rng, std::size_t source) {
    auto u = [&](double d) { return d > 0.0 ? std::uniform_real_distribution<double>(-d, d)(rng) : 0.0; };
    Candidate c;
    c.position = box.center + Point3{u(jitter.x), u(jitter.y), u(jitter.z)};
    c.feature = default_seed_provider()(cloud, index, c.position);
    c.centerness = centerness(c.position, box);
    c.source_index = source;
    return c;
}

struct SceneContext {
    GridIndex index;
    std::vector<Feature> features;
};

inline SceneContext make_context(const Scene& scene) {
    SceneContext ctx{GridIndex(scene.cloud.points, 1.0), {}};
    ctx.features = point_features(scene.cloud, ctx.index, default_point_provider());
    return ctx;
}

inline std::vector<ImplicitExample> make_implicit_examples(std::span<const Scene> scenes, const TrainDataConfig& cfg,
                                                           std::uint64_t seed) {
    std::vector<ImplicitExample> out;
    std::mt19937_64 rng(seed);
    for (const Scene& scene : scenes) {
        const SceneContext ctx = make_context(scene);
        for (std::size_t b = 0; b < scene.boxes.size(); ++b) {
            const Candidate c = jittered_candidate(scene.boxes[b], scene.cloud, ctx.index, cfg.candidate_jitter, rng, b);
            ImplicitExample ex;
            ex.sample = build_local_sample(c, scene.cloud, ctx.index, ctx.features, cfg.sample, rng());
            ex.targets = oracle_assignment(ex.sample, scene.boxes[b]).values;
            ex.gt_box = scene.boxes[b];
            out.push_back(std::move(ex));
        }
    }
    return out;
}

// Seeds whose footprint position lies inside a box, with the offset to its centre.
inline std::vector<ShifterExample> make_shifter_examples(std::span<const Scene> scenes, double seed_cell) {
    std::vector<ShifterExample> out;
    for (const Scene& scene : scenes) {
        const SeedGrid grid = make_seed_grid(scene.cloud, seed_cell);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            for (const OrientedBox3& b : scene.boxes) {
                if (point_in_box_bev(grid.positions[i], b)) {
                    out.push_back({grid.features[i], b.center - grid.positions[i]});
                    break;
                }
            }
        }
    }
    return out;
}

// Every seed shifted by `shifter`, with its refreshed feature and the
// centerness of the shifted position as target. `positives` receives the
// number of seeds inside a box footprint.
inline std::vector<CenternessExample> make_centerness_examples(std::span<const Scene> scenes, double seed_cell,
                                                               const std::function<Shifter(const Scene&)>& make_shifter,
                                                               std::size_t& positives) {
    std::vector<CenternessExample> out;
    positives = 0;
    for (const Scene& scene : scenes) {
        const SeedGrid grid = make_seed_grid(scene.cloud, seed_cell);
        if (grid.empty()) continue;
        const GridIndex index(scene.cloud.points, 1.0);
        const Shifter s = refeaturing_shifter(make_shifter(scene), scene.cloud, index, default_seed_provider());
        const auto cands = shift_candidates(grid, s, oracle_scorer(scene.boxes));
        for (std::size_t i = 0; i < cands.size(); ++i) {
            out.push_back({cands[i].feature, cands[i].centerness});
            for (const OrientedBox3& b : scene.boxes) {
                if (point_in_box_bev(grid.positions[i], b)) {
                    ++positives;
                    break;
                }
            }
        }
    }
    return out;
}

inline RefineExample make_refine_example(const OrientedBox3& fitted, const OrientedBox3& gt, const LocalSample& sample,
                                         const ImplicitAssignment& a) {
    RefineExample ex;
    ex.descriptor = aggregate(fitted, sample, a).descriptor;
    ex.class_target = iou_3d(fitted, gt) >= 0.7 ? 1.0 : 0.0;
    ex.box_target = refinement_target(fitted, gt, ex.direction);
    return ex;
}

// One positive (boundary fitted from oracle values) and one displaced negative
// per ground-truth box.
inline std::vector<RefineExample> make_refine_examples(std::span<const ImplicitExample> implicit,
                                                       const BoundaryConfig& bcfg, std::uint64_t seed) {
    std::vector<RefineExample> out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ang(0.0, kTwoPi), mag(1.5, 3.0);
    for (const auto& ex : implicit) {
        const ImplicitAssignment a = make_assignment(ex.targets);
        FitResult fit;
        try {
            fit = generate_boundary(ex.sample, a, bcfg);
        } catch (const NoInsidePoints&) {
            continue;
        }
        out.push_back(make_refine_example(fit.box, ex.gt_box, ex.sample, a));
        OrientedBox3 off = fit.box;
        const double t = ang(rng), r = mag(rng);
        off.center += Point3{r * std::cos(t), r * std::sin(t), 0.0};
        RefineExample neg = make_refine_example(off, ex.gt_box, ex.sample, a);
        neg.class_target = 0.0;
        out.push_back(std::move(neg));
    }
    return out;
}

// ---------------------------------------------------------------------------
// SGD

struct SgdConfig {
    std::size_t epochs = 30;
    double lr = 0.05;
    std::size_t batch = 8;
    std::uint64_t seed = 0;
};

// Mini-batch SGD with a fixed learning rate. `loss` evaluates a batch (given
// as indices) and accumulates its gradient. Returns the mean loss over the
// full data before training followed by one entry per epoch.
inline std::vector<double> sgd(std::vector<double>& params, std::size_t n_examples, const SgdConfig& cfg,
                               const std::function<double(std::span<const double>, std::span<const std::size_t>,
                                                          std::span<double>)>& loss,
                               const std::function<void(std::size_t epoch)>& on_epoch = {}) {
    if (!(cfg.lr > 0.0)) throw InvalidArgument("learning rate must be positive");
    std::vector<std::size_t> order(n_examples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto full_loss = [&] {
        return n_examples == 0 ? 0.0 : loss(params, order, {});
    };
    std::vector<double> curve{full_loss()};
    if (!std::isfinite(curve.back())) throw DivergenceDetected(0);
    if (on_epoch) on_epoch(0);
    std::mt19937_64 rng(cfg.seed);
    std::vector<double> grad(params.size());
    const std::size_t bs = std::max<std::size_t>(cfg.batch, 1);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n_examples; start += bs) {
            const std::size_t end = std::min(start + bs, n_examples);
            std::fill(grad.begin(), grad.end(), 0.0);
            const double l = loss(params, std::span<const std::size_t>(order).subspan(start, end - start), grad);
            if (!std::isfinite(l)) throw DivergenceDetected(e + 1);
            for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.lr * grad[i];
        }
        std::sort(order.begin(), order.end());
        curve.push_back(full_loss());
        if (!std::isfinite(curve.back())) throw DivergenceDetected(e + 1);
        if (on_epoch) on_epoch(e + 1);
    }
    return curve;
}

template <typename T>
std::vector<T> gather(std::span<const T> all, std::span<const std::size_t> idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(all[i]);
    return out;
}

struct ImplicitTrainResult {
    KernelGenerator generator;
    std::vector<double> loss_curve;  // initial, then one mean BCE per epoch
};

inline ImplicitTrainResult train_implicit_classifier(std::span<const ImplicitExample> examples, const SgdConfig& cfg,
                                                     std::size_t feature_width = kFeatureWidth) {
    ImplicitTrainResult r{KernelGenerator(feature_width), {}};
    r.generator.init(cfg.seed);
    r.loss_curve = sgd(r.generator.params(), examples.size(), cfg,
                       [&](std::span<const double> p, std::span<const std::size_t> idx, std::span<double> g) {
                           if (idx.size() == examples.size()) return implicit_loss(p, r.generator, examples, g);
                           const auto batch = gather(examples, idx);
                           return implicit_loss(p, r.generator, batch, g);
                       });
    return r;
}

inline ImplicitTrainResult train_implicit_classifier(std::span<const Scene> scenes, std::size_t epochs, double lr,
                                                     std::uint64_t seed, const TrainDataConfig& data = {}) {
    if (scenes.empty()) throw EmptyInput("training needs at least one scene");
    const auto examples = make_implicit_examples(scenes, data, seed);
    return train_implicit_classifier(examples, SgdConfig{epochs, lr, 8, seed});
}

// Fraction of sampled points whose thresholded value matches the label.
inline double implicit_accuracy(const KernelGenerator& gen, std::span<const ImplicitExample> examples) {
    std::size_t correct = 0, total = 0;
    for (const auto& ex : examples) {
        const auto a = assign_values(ex.sample, condition_kernels(ex.sample.candidate, gen));
        for (std::size_t i = 0; i < a.size(); ++i) {
            correct += (a.inside[i] == (ex.targets[i] > 0.5)) ? 1 : 0;
            ++total;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Full model

struct TrainConfig {
    std::size_t epochs = 30;
    double lr = 0.05;
    std::size_t batch = 8;
    std::uint64_t seed = 0;
    LossWeights weights;
    TrainDataConfig data;
    BoundaryConfig boundary;
};

struct LossCurveRow {
    std::size_t epoch = 0;
    LossBreakdown terms;
};

struct TrainAllResult {
    Model model;
    std::vector<LossCurveRow> curve;  // epoch 0 = before training
};

// Trains shifter, centerness head (on candidates from the trained shifter),
// conditioned classifier and refinement head in turn. Components share no
// parameters, so SGD on the weighted total equals per-component SGD with the
// learning rate scaled by that component's weight.
inline TrainAllResult train_all(std::span<const Scene> scenes, const TrainConfig& cfg) {
    if (scenes.empty()) throw EmptyInput("training needs at least one scene");
    if (!(cfg.lr > 0.0)) throw InvalidArgument("learning rate must be positive");
    cfg.weights.validate();
    TrainAllResult r;
    r.curve.resize(cfg.epochs + 1);
    for (std::size_t e = 0; e <= cfg.epochs; ++e) r.curve[e].epoch = e;
    auto scaled = [&](double w, std::uint64_t salt) {
        return SgdConfig{cfg.epochs, cfg.lr * std::max(w, 1e-12), cfg.batch, cfg.seed + salt};
    };

    const auto shift_ex = make_shifter_examples(scenes, cfg.data.seed_cell);
    r.model.shifter.mlp().init(cfg.seed + 11);
    if (cfg.weights.offset > 0.0) {
        const auto c = sgd(r.model.shifter.mlp().params(), shift_ex.size(), scaled(cfg.weights.offset, 1),
                           [&](std::span<const double> p, std::span<const std::size_t> idx, std::span<double> g) {
                               const auto b = gather<ShifterExample>(shift_ex, idx);
                               return shifter_loss(p, r.model.shifter, b, g);
                           });
        for (std::size_t e = 0; e < c.size(); ++e) r.curve[e].terms.offset = c[e];
    }

    std::size_t positives = 0;
    const ShifterModel trained_shifter = r.model.shifter;
    const auto ctr_ex = make_centerness_examples(
        scenes, cfg.data.seed_cell, [&](const Scene&) { return learned_shifter(trained_shifter); }, positives);
    r.model.centerness.mlp().init(cfg.seed + 12);
    if (cfg.weights.centerness > 0.0) {
        // Normalise each batch by the positive share it would carry on average.
        const double pos_rate = ctr_ex.empty() ? 0.0 : static_cast<double>(positives) / static_cast<double>(ctr_ex.size());
        const auto c = sgd(r.model.centerness.mlp().params(), ctr_ex.size(), scaled(cfg.weights.centerness, 2),
                           [&](std::span<const double> p, std::span<const std::size_t> idx, std::span<double> g) {
                               const auto b = gather<CenternessExample>(ctr_ex, idx);
                               const auto n_pos = static_cast<std::size_t>(
                                   std::max(1.0, std::round(pos_rate * static_cast<double>(b.size()))));
                               return centerness_loss(p, r.model.centerness, b, positives ? n_pos : 0, g);
                           });
        for (std::size_t e = 0; e < c.size(); ++e) r.curve[e].terms.centerness = c[e];
    }

    const auto imp_ex = make_implicit_examples(scenes, cfg.data, cfg.seed + 3);
    r.model.generator.init(cfg.seed + 13);
    if (cfg.weights.implicit > 0.0) {
        const auto c = sgd(r.model.generator.params(), imp_ex.size(), scaled(cfg.weights.implicit, 3),
                           [&](std::span<const double> p, std::span<const std::size_t> idx, std::span<double> g) {
                               const auto b = gather<ImplicitExample>(imp_ex, idx);
                               return implicit_loss(p, r.model.generator, b, g);
                           });
        for (std::size_t e = 0; e < c.size(); ++e) r.curve[e].terms.implicit = c[e];
    }

    const auto ref_ex = make_refine_examples(imp_ex, cfg.boundary, cfg.seed + 4);
    r.model.refine.init(cfg.seed + 14);
    std::vector<std::size_t> all(ref_ex.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    sgd(
        r.model.refine.params(), ref_ex.size(), SgdConfig{cfg.epochs, cfg.lr, cfg.batch, cfg.seed + 5},
        [&](std::span<const double> p, std::span<const std::size_t> idx, std::span<double> g) {
            const auto b = gather<RefineExample>(ref_ex, idx);
            return refine_loss(p, r.model.refine, b, cfg.weights, g);
        },
        [&](std::size_t e) {
            RefineLossTerms t;
            refine_loss(r.model.refine.params(), r.model.refine, ref_ex, cfg.weights, {}, &t);
            r.curve[e].terms.cls = t.cls;
            r.curve[e].terms.box = t.box;
            r.curve[e].terms.direction = t.direction;
        });

    const LossWeights& w = cfg.weights;
    for (auto& row : r.curve) {
        LossBreakdown& t = row.terms;
        t.total = w.offset * t.offset + w.centerness * t.centerness + w.implicit * t.implicit + w.cls * t.cls +
                  w.box * t.box + w.direction * t.direction;
    }
    return r;
}

}  // namespace impdet
