#pragma once

// Occupant aggregation: implicit-value-weighted features pooled at a 6x6x6
// lattice inside each fitted boundary, fed to a small three-branch head
// (confidence, box residual, direction).

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "impdet/geometry.hpp"
#include "impdet/implicit.hpp"
#include "impdet/nn.hpp"

namespace impdet {

inline constexpr std::size_t kOccupantCells = 6;
inline constexpr std::size_t kOccupantPoints = kOccupantCells * kOccupantCells * kOccupantCells;
inline constexpr double kAggregationRadius = 0.8;
inline constexpr std::size_t kBoxDeltaWidth = 7;  // dx dy dz dl dw dh dyaw

// Cell centres of a 6x6x6 partition of the box, ordered x-major.
inline std::vector<Point3> occupant_grid(const OrientedBox3& box) {
    require_valid(box);
    std::vector<Point3> out;
    out.reserve(kOccupantPoints);
    const double n = static_cast<double>(kOccupantCells);
    for (std::size_t i = 0; i < kOccupantCells; ++i)
        for (std::size_t j = 0; j < kOccupantCells; ++j)
            for (std::size_t k = 0; k < kOccupantCells; ++k) {
                const Point3 local{((static_cast<double>(i) + 0.5) / n - 0.5) * box.dims.l,
                                   ((static_cast<double>(j) + 0.5) / n - 0.5) * box.dims.w,
                                   ((static_cast<double>(k) + 0.5) / n - 0.5) * box.dims.h};
                out.push_back(from_box_frame(local, box));
            }
    return out;
}

struct OccupantFeatures {
    std::vector<Point3> grid_points;
    std::vector<Feature> grid_features;
    std::vector<double> descriptor;  // grid features concatenated
};

// Per grid point: element-wise max of (feature * implicit value) over the
// sampled points within `radius` whose value is positive. Empty neighbourhoods
// give zero vectors. With weighted = false the raw features are pooled (same
// neighbourhoods).
inline OccupantFeatures aggregate(const OrientedBox3& box, const LocalSample& sample, const ImplicitAssignment& a,
                                  double radius = kAggregationRadius, bool weighted = true) {
    if (!(radius > 0.0)) throw InvalidArgument("aggregation radius must be positive");
    if (a.size() != sample.size()) throw ShapeMismatch("assignment size differs from sample size");
    const std::size_t width = sample.size() > 0 ? sample.feature(0).size() : kFeatureWidth;

    OccupantFeatures out;
    out.grid_points = occupant_grid(box);
    out.grid_features.reserve(kOccupantPoints);
    out.descriptor.reserve(kOccupantPoints * width);
    for (const Point3& g : out.grid_points) {
        Feature pooled(width, 0.0);
        bool any = false;
        for (std::size_t i = 0; i < sample.size(); ++i) {
            const double v = a.values[i];
            if (!(v > 0.0)) continue;
            const Point3 d = sample.point(i) - g;
            if (dot(d, d) >= radius * radius) continue;
            const Feature& f = sample.feature(i);
            const double w = weighted ? v : 1.0;
            for (std::size_t c = 0; c < width; ++c) {
                const double x = f[c] * w;
                pooled[c] = any ? std::max(pooled[c], x) : x;
            }
            any = true;
        }
        out.descriptor.insert(out.descriptor.end(), pooled.begin(), pooled.end());
        out.grid_features.push_back(std::move(pooled));
    }
    return out;
}

struct RefineOutput {
    double confidence = 0.5;
    std::array<double, kBoxDeltaWidth> box_delta{};
    double direction_prob = 0.5;
    int direction = 0;
};

// Shared trunk of two ReLU layers, then three branches of two layers each.
class RefineHead {
public:
    explicit RefineHead(std::size_t input_width = kOccupantPoints * kFeatureWidth, std::size_t width = 64)
        : trunk_({input_width, width, width}),
          cls_({width, width, 1}),
          box_({width, width, kBoxDeltaWidth}),
          dir_({width, width, 1}) {
        offsets_[0] = 0;
        offsets_[1] = offsets_[0] + trunk_.params().size();
        offsets_[2] = offsets_[1] + cls_.params().size();
        offsets_[3] = offsets_[2] + box_.params().size();
        params_.assign(offsets_[3] + dir_.params().size(), 0.0);
    }

    std::size_t input_width() const { return trunk_.input_width(); }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    void init(std::uint64_t seed) {
        std::size_t s = seed;
        for (nn::Mlp* m : {&trunk_, &cls_, &box_, &dir_}) {
            m->init(s++);
        }
        std::copy(trunk_.params().begin(), trunk_.params().end(), params_.begin() + offsets_[0]);
        std::copy(cls_.params().begin(), cls_.params().end(), params_.begin() + offsets_[1]);
        std::copy(box_.params().begin(), box_.params().end(), params_.begin() + offsets_[2]);
        std::copy(dir_.params().begin(), dir_.params().end(), params_.begin() + offsets_[3]);
        // Start the residual branch near zero.
        auto bp = segment(std::span<double>(params_), 2);
        for (double& v : bp) v *= 0.01;
    }

    struct Trace {
        nn::Mlp::Trace trunk, cls, box, dir;
        std::vector<double> shared;  // ReLU(trunk output)
        RefineOutput out;
    };

    Trace forward_with(std::span<const double> p, std::span<const double> descriptor) const {
        for (double v : p)
            if (!std::isfinite(v)) throw InvalidArgument("refine head parameters must be finite");
        if (descriptor.size() != input_width()) throw ShapeMismatch("descriptor width does not match refine head");
        Trace t;
        t.trunk = trunk_.forward_with(segment(p, 0), descriptor);
        t.shared = t.trunk.output();
        for (double& v : t.shared) v = nn::relu(v);
        t.cls = cls_.forward_with(segment(p, 1), t.shared);
        t.box = box_.forward_with(segment(p, 2), t.shared);
        t.dir = dir_.forward_with(segment(p, 3), t.shared);
        t.out.confidence = nn::sigmoid(t.cls.output()[0]);
        for (std::size_t i = 0; i < kBoxDeltaWidth; ++i) t.out.box_delta[i] = t.box.output()[i];
        t.out.direction_prob = nn::sigmoid(t.dir.output()[0]);
        t.out.direction = t.out.direction_prob > 0.5 ? 1 : 0;
        return t;
    }

    RefineOutput forward(std::span<const double> descriptor) const { return forward_with(params_, descriptor).out; }

    // Gradients w.r.t. the raw branch outputs: confidence logit, box delta,
    // direction logit. Accumulates into grad (layout of params()).
    void backward_with(std::span<const double> p, const Trace& t, double d_cls_logit,
                       std::span<const double> d_box, double d_dir_logit, std::span<double> grad) const {
        std::vector<double> dshared(t.shared.size(), 0.0);
        auto add = [&](const std::vector<double>& d) {
            for (std::size_t i = 0; i < d.size(); ++i) dshared[i] += d[i];
        };
        add(cls_.backward_with(segment(p, 1), t.cls, std::span<const double>(&d_cls_logit, 1), segment(grad, 1)));
        add(box_.backward_with(segment(p, 2), t.box, d_box, segment(grad, 2)));
        add(dir_.backward_with(segment(p, 3), t.dir, std::span<const double>(&d_dir_logit, 1), segment(grad, 3)));
        for (std::size_t i = 0; i < dshared.size(); ++i)
            if (t.shared[i] <= 0.0) dshared[i] = 0.0;
        trunk_.backward_with(segment(p, 0), t.trunk, dshared, segment(grad, 0));
    }

private:
    template <typename T>
    std::span<T> segment(std::span<T> p, std::size_t i) const {
        const std::size_t end = i + 1 < 4 ? offsets_[i + 1] : params_.size();
        return p.subspan(offsets_[i], end - offsets_[i]);
    }

    nn::Mlp trunk_, cls_, box_, dir_;
    std::array<std::size_t, 4> offsets_{};
    std::vector<double> params_;
};

// Applies a residual in the box frame: centre offset rotated by yaw, dims
// scaled by exp(delta), yaw shifted; direction = 1 adds pi.
inline OrientedBox3 apply_refinement(const OrientedBox3& box, std::span<const double> delta, int direction) {
    if (delta.size() != kBoxDeltaWidth) throw ShapeMismatch("box delta must have 7 entries");
    OrientedBox3 out = box;
    const Point3 local{delta[0], delta[1], delta[2]};
    out.center = from_box_frame(local, box);
    out.dims = {box.dims.l * std::exp(delta[3]), box.dims.w * std::exp(delta[4]), box.dims.h * std::exp(delta[5])};
    out.yaw = wrap_two_pi(box.yaw + delta[6] + (direction ? std::numbers::pi : 0.0));
    return out;
}

// Residual that apply_refinement maps `from` onto `to` with the given
// direction bit (1 when the headings disagree by more than pi/2).
inline std::array<double, kBoxDeltaWidth> refinement_target(const OrientedBox3& from, const OrientedBox3& to,
                                                            int& direction) {
    const double dyaw_full = to.yaw - from.yaw;
    direction = std::cos(dyaw_full) < 0.0 ? 1 : 0;
    double dyaw = dyaw_full - (direction ? std::numbers::pi : 0.0);
    dyaw = std::remainder(dyaw, kTwoPi);
    const Point3 local = to_box_frame(to.center, from);
    return {local.x, local.y, local.z, std::log(to.dims.l / from.dims.l), std::log(to.dims.w / from.dims.w),
            std::log(to.dims.h / from.dims.h), dyaw};
}

}  // namespace impdet
