#pragma once

// Boundary fitting from implicitly classified points: minimum boxes at h
// enumerated yaws in [0, pi/2), scored by the summed point-to-surface
// distance, followed by the l >= w orientation correction.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "impdet/geometry.hpp"
#include "impdet/implicit.hpp"

namespace impdet {

enum class FitStrategy { sampling, centrosymmetry };

inline std::string to_string(FitStrategy s) {
    return s == FitStrategy::sampling ? "sampling" : "centrosymmetry";
}

inline FitStrategy parse_strategy(const std::string& s) {
    if (s == "sampling") return FitStrategy::sampling;
    if (s == "centrosymmetry") return FitStrategy::centrosymmetry;
    throw InvalidArgument("unknown fit strategy '" + s + "'");
}

struct FitResult {
    OrientedBox3 box;
    std::size_t angle_index = 0;
    double score = 0.0;  // metres
    FitStrategy strategy = FitStrategy::sampling;
    std::size_t inside_count = 0;
};

struct BoundaryConfig {
    std::size_t h = 7;
    double threshold = kImplicitThreshold;
    FitStrategy strategy = FitStrategy::sampling;
    // Fit with virtual points as well as raw points.
    bool use_virtual = true;
    // Score candidate angles with raw inside points only (when any exist).
    bool score_raw_only = false;

    void validate() const {
        if (h < 1) throw InvalidArgument("angle count h must be >= 1");
        if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("threshold must lie in (0, 1)");
    }
};

inline std::vector<Point3> inside_points(const LocalSample& sample, const ImplicitAssignment& a,
                                         double t = kImplicitThreshold, bool include_virtual = true) {
    if (!(t > 0.0 && t < 1.0)) throw InvalidArgument("threshold must lie in (0, 1)");
    if (a.size() != sample.size()) throw ShapeMismatch("assignment size differs from sample size");
    const std::size_t n = include_virtual ? sample.size() : sample.raw_count();
    std::vector<Point3> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (a.values[i] > t) out.push_back(sample.point(i));
    }
    return out;
}

// theta_j = j * (pi/2) / h, j = 0..h-1.
inline std::vector<double> angle_set(std::size_t h) {
    if (h < 1) throw InvalidArgument("angle count h must be >= 1");
    std::vector<double> out(h);
    for (std::size_t j = 0; j < h; ++j) out[j] = static_cast<double>(j) * kHalfPi / static_cast<double>(h);
    return out;
}

inline double fit_score(std::span<const Point3> points, const OrientedBox3& box) {
    double s = 0.0;
    for (const Point3& p : points) s += nearest_face_distance(p, box);
    return s;
}

namespace detail {

// Minimum box per angle; lowest score wins, then smaller volume, then smaller
// angle index.
inline FitResult search_angles(std::span<const Point3> fit_pts, std::span<const Point3> score_pts, std::size_t h,
                               FitStrategy strategy) {
    const auto angles = angle_set(h);
    FitResult best;
    bool have = false;
    for (std::size_t j = 0; j < angles.size(); ++j) {
        const OrientedBox3 box = min_box_at_yaw(fit_pts, angles[j]);
        const double score = fit_score(score_pts, box);
        bool better = !have;
        if (have) {
            const double tol = 1e-12 * std::max(1.0, std::abs(best.score));
            if (score < best.score - tol) {
                better = true;
            } else if (std::abs(score - best.score) <= tol && box.volume() < best.box.volume()) {
                better = true;
            }
        }
        if (better) {
            best = FitResult{box, j, score, strategy, fit_pts.size()};
            have = true;
        }
    }
    return best;
}

}  // namespace detail

inline FitResult fit_sampling(std::span<const Point3> points, std::size_t h = 7) {
    if (points.empty()) throw EmptyInput("fit_sampling needs at least one point");
    return detail::search_angles(points, points, h, FitStrategy::sampling);
}

inline FitResult fit_centrosymmetry(std::span<const Point3> points, const Point3& center, std::size_t h = 7) {
    if (points.empty()) throw EmptyInput("fit_centrosymmetry needs at least one point");
    std::vector<Point3> doubled(points.begin(), points.end());
    doubled.reserve(2 * points.size());
    for (const Point3& p : points) doubled.push_back(2.0 * center - p);
    FitResult r = detail::search_angles(doubled, doubled, h, FitStrategy::centrosymmetry);
    r.box.center = center;
    r.inside_count = points.size();
    return r;
}

// Keeps yaw when l >= w; otherwise swaps l and w and adds pi/2.
inline FitResult correct_orientation(FitResult fit) {
    if (!(fit.box.yaw >= 0.0 && fit.box.yaw < kHalfPi + 1e-12))
        throw InvalidArgument("orientation correction expects yaw in [0, pi/2)");
    if (fit.box.dims.l < fit.box.dims.w) {
        std::swap(fit.box.dims.l, fit.box.dims.w);
        fit.box.yaw += kHalfPi;
    }
    return fit;
}

inline FitResult generate_boundary(const LocalSample& sample, const ImplicitAssignment& a,
                                   const BoundaryConfig& cfg = {}) {
    cfg.validate();
    const auto pts = inside_points(sample, a, cfg.threshold, cfg.use_virtual);
    if (pts.empty()) throw NoInsidePoints();
    if (cfg.strategy == FitStrategy::centrosymmetry)
        return correct_orientation(fit_centrosymmetry(pts, sample.candidate.position, cfg.h));

    if (cfg.score_raw_only) {
        const auto raw = inside_points(sample, a, cfg.threshold, false);
        if (!raw.empty()) return correct_orientation(detail::search_angles(pts, raw, cfg.h, FitStrategy::sampling));
    }
    return correct_orientation(fit_sampling(pts, cfg.h));
}

}  // namespace impdet
