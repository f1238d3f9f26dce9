#pragma once

// Local sampling around a candidate (ball query over raw points plus a
// virtual lattice) and implicit inside/outside values from kernels that are
// generated per candidate.
//
// Kernel generator:  theta = tanh(G [f_ctr; s * p_ctr] + g)
// Per-point network: v = sigmoid(w2 . relu(W1 [f; p - p_ctr] + b1) + b2)
// where (W1, b1, w2, b2) are reshaped from theta. Both layers act pointwise
// (1x1 convolutions over the unordered sample).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "impdet/candidates.hpp"
#include "impdet/features.hpp"
#include "impdet/geometry.hpp"
#include "impdet/losses.hpp"
#include "impdet/nn.hpp"
#include "impdet/spatial_index.hpp"

namespace impdet {

inline constexpr std::size_t kKernelChannels = 16;
inline constexpr double kImplicitThreshold = 0.5;
// Candidate positions are scaled by this before entering the generator.
inline constexpr double kPositionScale = 0.02;

struct SampleConfig {
    double radius = 3.2;
    std::size_t m = 256;
    std::size_t grid = 10;
    Point3 interval{0.6, 0.6, 0.3};
    std::size_t knn = 3;
    bool use_virtual = true;

    void validate() const {
        if (!(radius > 0.0)) throw InvalidArgument("ball radius must be positive");
        if (m < 1) throw InvalidArgument("sample count m must be >= 1");
        if (grid < 1) throw InvalidArgument("virtual grid size must be >= 1");
        if (!(interval.x > 0.0 && interval.y > 0.0 && interval.z > 0.0))
            throw InvalidArgument("virtual grid intervals must be positive");
        if (knn < 1) throw InvalidArgument("knn must be >= 1");
    }
};

namespace detail {

// Uniform subset of `pool` of size min(m, |pool|), returned in ascending order.
template <typename T>
std::vector<T> random_subset(std::vector<T> pool, std::size_t m, std::uint64_t seed) {
    if (pool.size() <= m) return pool;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(m);
    return pool;
}

}  // namespace detail

// Indices of up to m points strictly within r of center, chosen uniformly.
inline std::vector<std::size_t> ball_query(const PointCloud& cloud, const Point3& center, double r,
                                           std::size_t m, std::uint64_t seed) {
    if (!(r > 0.0)) throw InvalidArgument("ball radius must be positive");
    if (m < 1) throw InvalidArgument("ball query needs m >= 1");
    std::vector<std::size_t> in_ball;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Point3 d = cloud.points[i] - center;
        if (dot(d, d) < r * r) in_ball.push_back(i);
    }
    auto out = detail::random_subset(std::move(in_ball), m, seed);
    std::sort(out.begin(), out.end());
    return out;
}

// Same contract, accelerated by a prebuilt index over the same cloud.
inline std::vector<std::size_t> ball_query(const GridIndex& index, const Point3& center, double r,
                                           std::size_t m, std::uint64_t seed) {
    if (!(r > 0.0)) throw InvalidArgument("ball radius must be positive");
    if (m < 1) throw InvalidArgument("ball query needs m >= 1");
    auto out = detail::random_subset(index.within(center, r), m, seed);
    std::sort(out.begin(), out.end());
    return out;
}

// Full S^3 lattice centred on `center`, then a uniform subset of size
// min(m, S^3) in lattice order.
inline std::vector<Point3> virtual_grid(const Point3& center, std::size_t S, const Point3& interval,
                                        std::size_t m, std::uint64_t seed) {
    if (S < 1) throw InvalidArgument("grid size must be >= 1");
    if (!(interval.x > 0.0 && interval.y > 0.0 && interval.z > 0.0))
        throw InvalidArgument("grid intervals must be positive");
    const double half = 0.5 * static_cast<double>(S - 1);
    std::vector<std::size_t> ids(S * S * S);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    ids = detail::random_subset(std::move(ids), m, seed);
    std::sort(ids.begin(), ids.end());
    std::vector<Point3> out;
    out.reserve(ids.size());
    for (std::size_t id : ids) {
        const std::size_t i = id / (S * S), j = (id / S) % S, k = id % S;
        out.push_back({center.x + (static_cast<double>(i) - half) * interval.x,
                       center.y + (static_cast<double>(j) - half) * interval.y,
                       center.z + (static_cast<double>(k) - half) * interval.z});
    }
    return out;
}

// Inverse-distance weighted mean (weights 1 / (d + 1e-8)) of the k nearest
// features. A coincident cloud point returns its own feature.
inline Feature knn_interpolate(const Point3& query, std::span<const Point3> points,
                               std::span<const Feature> features, std::size_t k = 3) {
    if (points.empty()) throw EmptyCloud();
    if (k < 1) throw InvalidArgument("knn needs k >= 1");
    if (features.size() != points.size()) throw ShapeMismatch("one feature per point required");
    std::vector<std::pair<double, std::size_t>> d(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) d[i] = {distance(query, points[i]), i};
    const std::size_t kk = std::min(k, points.size());
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
    if (d[0].first == 0.0) return features[d[0].second];

    Feature out(features[d[0].second].size(), 0.0);
    double wsum = 0.0;
    for (std::size_t n = 0; n < kk; ++n) {
        const double w = 1.0 / (d[n].first + 1e-8);
        const Feature& f = features[d[n].second];
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += w * f[c];
        wsum += w;
    }
    for (double& v : out) v /= wsum;
    return out;
}

// Raw points first, then virtual points; assignments use the same order.
struct LocalSample {
    Candidate candidate;
    std::vector<std::size_t> raw_indices;  // into the source cloud
    std::vector<Point3> raw_points;
    std::vector<Feature> raw_features;
    std::vector<Point3> virtual_points;
    std::vector<Feature> virtual_features;

    std::size_t raw_count() const { return raw_points.size(); }
    std::size_t size() const { return raw_points.size() + virtual_points.size(); }
    const Point3& point(std::size_t i) const {
        return i < raw_points.size() ? raw_points[i] : virtual_points[i - raw_points.size()];
    }
    const Feature& feature(std::size_t i) const {
        return i < raw_features.size() ? raw_features[i] : virtual_features[i - raw_features.size()];
    }
};

// Ball query + virtual lattice around the candidate; virtual features are
// interpolated from the sampled raw points (zero when the ball is empty) and
// carry their distance to the nearest raw point in kSurfaceDistanceSlot.
inline LocalSample build_local_sample(const Candidate& cand, const PointCloud& cloud, const GridIndex& index,
                                      std::span<const Feature> cloud_features, const SampleConfig& cfg,
                                      std::uint64_t seed) {
    cfg.validate();
    LocalSample s;
    s.candidate = cand;
    s.raw_indices = ball_query(index, cand.position, cfg.radius, cfg.m, seed);
    // Without cloud features (geometry-only runs) every feature is empty.
    const bool featured = !cloud_features.empty();
    if (featured && cloud_features.size() != cloud.size())
        throw ShapeMismatch("one feature per cloud point required");
    for (std::size_t i : s.raw_indices) {
        s.raw_points.push_back(cloud.points[i]);
        s.raw_features.push_back(featured ? cloud_features[i] : Feature{});
    }
    if (cfg.use_virtual) {
        s.virtual_points = virtual_grid(cand.position, cfg.grid, cfg.interval, cfg.m, seed ^ 0x9e3779b97f4a7c15ULL);
        const std::size_t width = featured ? cloud_features[0].size() : 0;
        for (const Point3& v : s.virtual_points) {
            if (!featured || s.raw_points.empty()) {
                s.virtual_features.emplace_back(width, 0.0);
                continue;
            }
            Feature f = knn_interpolate(v, s.raw_points, s.raw_features, cfg.knn);
            if (f.size() > kSurfaceDistanceSlot) {
                double nearest = INFINITY;
                for (const Point3& r : s.raw_points) nearest = std::min(nearest, distance(v, r));
                f[kSurfaceDistanceSlot] = nearest;
            }
            s.virtual_features.push_back(std::move(f));
        }
    }
    return s;
}

struct ImplicitAssignment {
    std::vector<double> values;
    std::vector<bool> inside;
    double threshold = kImplicitThreshold;

    std::size_t size() const { return values.size(); }
};

inline ImplicitAssignment make_assignment(std::vector<double> values, double t = kImplicitThreshold) {
    ImplicitAssignment a;
    a.threshold = t;
    a.inside.reserve(values.size());
    for (double v : values) a.inside.push_back(v > t);
    a.values = std::move(values);
    return a;
}

// ---------------------------------------------------------------------------
// Conditioned kernels

// Number of kernel parameters for feature width F: (F + 3 + 1) * 16 + (16 + 1).
inline constexpr std::size_t kernel_param_count(std::size_t feature_width) {
    return (feature_width + 3 + 1) * kKernelChannels + (kKernelChannels + 1);
}

// theta layout: W1 (16 x (F+3), row-major), b1 (16), w2 (16), b2 (1).
struct ConditionedKernels {
    std::size_t feature_width = kFeatureWidth;
    std::vector<double> theta;

    std::size_t point_input_width() const { return feature_width + 3; }
    nn::DenseShape layer1() const { return {point_input_width(), kKernelChannels}; }
    nn::DenseShape layer2() const { return {kKernelChannels, 1}; }
    std::span<const double> layer1_params() const { return {theta.data(), layer1().size()}; }
    std::span<const double> layer2_params() const { return {theta.data() + layer1().size(), layer2().size()}; }
};

// Affine map + tanh from [feature; scaled position] to theta.
class KernelGenerator {
public:
    explicit KernelGenerator(std::size_t feature_width = kFeatureWidth)
        : feature_width_(feature_width), params_(shape().size(), 0.0) {}

    std::size_t feature_width() const { return feature_width_; }
    nn::DenseShape shape() const { return {feature_width_ + 3, kernel_param_count(feature_width_)}; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    // Weights ~ N(0, weight_scale^2 / in); biases ~ N(0, bias_scale^2).
    void init(std::uint64_t seed, double weight_scale = 0.5, double bias_scale = 0.3) {
        std::mt19937_64 rng(seed);
        const auto s = shape();
        std::normal_distribution<double> w(0.0, weight_scale / std::sqrt(static_cast<double>(s.in)));
        std::normal_distribution<double> b(0.0, bias_scale);
        for (std::size_t i = 0; i < s.in * s.out; ++i) params_[i] = w(rng);
        for (std::size_t i = s.in * s.out; i < s.size(); ++i) params_[i] = b(rng);
    }

    std::vector<double> condition_input(const Candidate& c) const {
        if (c.feature.size() != feature_width_) throw ShapeMismatch("candidate feature width mismatch");
        std::vector<double> x(c.feature.begin(), c.feature.end());
        x.push_back(kPositionScale * c.position.x);
        x.push_back(kPositionScale * c.position.y);
        x.push_back(kPositionScale * c.position.z);
        return x;
    }

private:
    std::size_t feature_width_;
    std::vector<double> params_;
};

inline ConditionedKernels condition_kernels_with(std::span<const double> params, const KernelGenerator& gen,
                                                 const Candidate& cand) {
    for (double p : params)
        if (!std::isfinite(p)) throw InvalidArgument("generator parameters must be finite");
    const auto x = gen.condition_input(cand);
    ConditionedKernels k;
    k.feature_width = gen.feature_width();
    k.theta.resize(gen.shape().out);
    nn::dense_forward(params, gen.shape(), x, k.theta);
    for (double& t : k.theta) t = std::tanh(t);
    return k;
}

inline ConditionedKernels condition_kernels(const Candidate& cand, const KernelGenerator& gen) {
    return condition_kernels_with(gen.params(), gen, cand);
}

namespace detail {

struct PointForward {
    std::vector<double> input;   // [feature; p - p_ctr]
    std::vector<double> hidden;  // post-ReLU
    double value = 0.0;
};

inline PointForward point_forward(const ConditionedKernels& k, const Feature& f, const Point3& p,
                                  const Point3& ctr) {
    if (f.size() != k.feature_width) throw ShapeMismatch("point feature width does not match kernels");
    PointForward pf;
    pf.input.assign(f.begin(), f.end());
    pf.input.push_back(p.x - ctr.x);
    pf.input.push_back(p.y - ctr.y);
    pf.input.push_back(p.z - ctr.z);
    pf.hidden.resize(kKernelChannels);
    nn::dense_forward(k.layer1_params(), k.layer1(), pf.input, pf.hidden);
    for (double& h : pf.hidden) h = nn::relu(h);
    double z = 0.0;
    nn::dense_forward(k.layer2_params(), k.layer2(), pf.hidden, std::span<double>(&z, 1));
    pf.value = nn::sigmoid(z);
    return pf;
}

}  // namespace detail

inline ImplicitAssignment assign_values(const LocalSample& sample, const ConditionedKernels& kernels,
                                        double t = kImplicitThreshold) {
    if (kernels.theta.size() != kernel_param_count(kernels.feature_width))
        throw ShapeMismatch("kernel parameter count does not match feature width");
    std::vector<double> values;
    values.reserve(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) {
        values.push_back(
            detail::point_forward(kernels, sample.feature(i), sample.point(i), sample.candidate.position).value);
    }
    return make_assignment(std::move(values), t);
}

// Ground-truth labels: 1 inside the box (closed), 0 elsewhere.
inline ImplicitAssignment oracle_assignment(const LocalSample& sample, const OrientedBox3& gt_box,
                                            double t = kImplicitThreshold) {
    require_valid(gt_box);
    std::vector<double> values;
    values.reserve(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i) values.push_back(point_in_box(sample.point(i), gt_box) ? 1.0 : 0.0);
    return make_assignment(std::move(values), t);
}

// Mean BCE of the conditioned classifier on one sample against `targets`
// (one per sampled point). When `grad` is non-empty the generator gradient is
// accumulated into it.
inline double implicit_bce(std::span<const double> params, const KernelGenerator& gen, const LocalSample& sample,
                           std::span<const double> targets, std::span<double> grad = {}) {
    if (targets.size() != sample.size()) throw ShapeMismatch("one implicit target per sampled point required");
    if (sample.size() == 0) return 0.0;
    const ConditionedKernels k = condition_kernels_with(params, gen, sample.candidate);
    const double inv_n = 1.0 / static_cast<double>(sample.size());
    double loss = 0.0;
    std::vector<double> dtheta(grad.empty() ? 0 : k.theta.size(), 0.0);
    std::span<double> dl1, dl2;
    if (!grad.empty()) {
        dl1 = std::span<double>(dtheta.data(), k.layer1().size());
        dl2 = std::span<double>(dtheta.data() + k.layer1().size(), k.layer2().size());
    }
    std::vector<double> dhidden(kKernelChannels);
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const auto pf = detail::point_forward(k, sample.feature(i), sample.point(i), sample.candidate.position);
        loss += bce(pf.value, targets[i]);
        if (grad.empty()) continue;
        // d/dz of bce(sigmoid(z)) through the clamp.
        const double dz = inv_n * bce_grad(pf.value, targets[i]) * pf.value * (1.0 - pf.value);
        nn::dense_backward(k.layer2_params(), k.layer2(), pf.hidden, std::span<const double>(&dz, 1), dl2, dhidden);
        for (std::size_t c = 0; c < kKernelChannels; ++c)
            if (pf.hidden[c] <= 0.0) dhidden[c] = 0.0;
        nn::dense_backward(k.layer1_params(), k.layer1(), pf.input, dhidden, dl1, {});
    }
    if (!grad.empty()) {
        for (std::size_t j = 0; j < dtheta.size(); ++j) dtheta[j] *= 1.0 - k.theta[j] * k.theta[j];
        const auto x = gen.condition_input(sample.candidate);
        nn::dense_backward(params, gen.shape(), x, dtheta, grad, {});
    }
    return loss * inv_n;
}

}  // namespace impdet
