#pragma once

// Oriented 3D boxes sharing a gravity-aligned z axis.
//
// Yaw convention: positive yaw rotates counter-clockwise about +z when viewed
// from above. A box's local frame has x along its length, y along its width
// and z along its height; to_box_frame applies a rotation by -yaw after
// translating by -center.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "impdet/errors.hpp"

namespace impdet {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kHalfPi = 0.5 * std::numbers::pi;

// Extents of degenerate (coplanar/collinear) point sets are clamped to this.
inline constexpr double kMinDim = 1e-3;

// Absolute slack for closed-box membership; absorbs the rounding of a
// world -> box-frame round trip so that fitted boxes contain their points.
inline constexpr double kInsideTolerance = 1e-9;

struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend Point3 operator+(const Point3& a, const Point3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
    friend Point3 operator-(const Point3& a, const Point3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
    friend Point3 operator*(double s, const Point3& p) { return {s * p.x, s * p.y, s * p.z}; }
    friend bool operator==(const Point3&, const Point3&) = default;

    Point3& operator+=(const Point3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
};

inline double dot(const Point3& a, const Point3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(const Point3& p) { return std::sqrt(dot(p, p)); }
inline double distance(const Point3& a, const Point3& b) { return norm(a - b); }

inline bool is_finite(const Point3& p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

struct Dims {
    double l = 1.0;  // along local x
    double w = 1.0;  // along local y
    double h = 1.0;  // along local z

    friend bool operator==(const Dims&, const Dims&) = default;
};

// Maps any finite angle into [0, 2*pi).
inline double wrap_two_pi(double angle) {
    double a = std::fmod(angle, kTwoPi);
    if (a < 0.0) a += kTwoPi;
    if (a >= kTwoPi) a = 0.0;
    return a;
}

struct OrientedBox3 {
    Point3 center;
    Dims dims;
    double yaw = 0.0;

    double volume() const { return dims.l * dims.w * dims.h; }
    double bev_area() const { return dims.l * dims.w; }

    bool is_valid() const {
        return is_finite(center) && std::isfinite(dims.l) && std::isfinite(dims.w) &&
               std::isfinite(dims.h) && dims.l > 0.0 && dims.w > 0.0 && dims.h > 0.0 &&
               std::isfinite(yaw) && yaw >= 0.0 && yaw < kTwoPi;
    }

    friend bool operator==(const OrientedBox3&, const OrientedBox3&) = default;
};

inline void require_valid(const OrientedBox3& box) {
    if (!box.is_valid()) throw InvalidArgument("invalid oriented box");
}

// Builds a box with yaw wrapped into [0, 2*pi).
inline OrientedBox3 make_box(Point3 center, Dims dims, double yaw) {
    return OrientedBox3{center, dims, wrap_two_pi(yaw)};
}

struct PointCloud {
    std::vector<Point3> points;
    std::vector<double> intensity;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    void push_back(const Point3& p, double r) {
        points.push_back(p);
        intensity.push_back(r);
    }

    friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

inline Point3 to_box_frame(const Point3& p, const OrientedBox3& box) {
    const double c = std::cos(box.yaw);
    const double s = std::sin(box.yaw);
    const Point3 d = p - box.center;
    return {c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
}

inline Point3 from_box_frame(const Point3& local, const OrientedBox3& box) {
    const double c = std::cos(box.yaw);
    const double s = std::sin(box.yaw);
    return {c * local.x - s * local.y + box.center.x,
            s * local.x + c * local.y + box.center.y,
            local.z + box.center.z};
}

namespace detail {

inline bool local_inside(const Point3& q, const Dims& d) {
    return std::abs(q.x) <= 0.5 * d.l + kInsideTolerance &&
           std::abs(q.y) <= 0.5 * d.w + kInsideTolerance &&
           std::abs(q.z) <= 0.5 * d.h + kInsideTolerance;
}

}  // namespace detail

// Closed membership: points on a face count as inside.
inline bool point_in_box(const Point3& p, const OrientedBox3& box) {
    return detail::local_inside(to_box_frame(p, box), box.dims);
}

// Footprint membership, ignoring z.
inline bool point_in_box_bev(const Point3& p, const OrientedBox3& box) {
    const Point3 q = to_box_frame(p, box);
    return std::abs(q.x) <= 0.5 * box.dims.l + kInsideTolerance &&
           std::abs(q.y) <= 0.5 * box.dims.w + kInsideTolerance;
}

// Corner order: bottom face (z = -h/2) counter-clockwise starting at
// (+l/2, +w/2), i.e. (+,+) (-,+) (-,-) (+,-), then the top face in the same
// order. Corners 0..3 therefore form a CCW footprint polygon.
inline std::array<Point3, 8> box_corners(const OrientedBox3& box) {
    const double hl = 0.5 * box.dims.l;
    const double hw = 0.5 * box.dims.w;
    const double hh = 0.5 * box.dims.h;
    constexpr std::array<std::array<double, 2>, 4> signs{{{1, 1}, {-1, 1}, {-1, -1}, {1, -1}}};
    std::array<Point3, 8> out{};
    for (std::size_t i = 0; i < 4; ++i) {
        out[i] = from_box_frame({signs[i][0] * hl, signs[i][1] * hw, -hh}, box);
        out[i + 4] = from_box_frame({signs[i][0] * hl, signs[i][1] * hw, hh}, box);
    }
    return out;
}

inline double nearest_face_distance(const Point3& p, const OrientedBox3& box) {
    const Point3 q = to_box_frame(p, box);
    if (!detail::local_inside(q, box.dims)) throw OutsidePoint();
    const double d = std::min({0.5 * box.dims.l - std::abs(q.x), 0.5 * box.dims.w - std::abs(q.y),
                               0.5 * box.dims.h - std::abs(q.z)});
    return std::max(d, 0.0);
}

// Smallest box with the given yaw that contains every point.
inline OrientedBox3 min_box_at_yaw(std::span<const Point3> points, double yaw) {
    if (points.empty()) throw EmptyInput("min_box_at_yaw needs at least one point");
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    double umin = INFINITY, umax = -INFINITY;
    double vmin = INFINITY, vmax = -INFINITY;
    double zmin = INFINITY, zmax = -INFINITY;
    for (const Point3& p : points) {
        const double u = c * p.x + s * p.y;
        const double v = -s * p.x + c * p.y;
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
        zmin = std::min(zmin, p.z);
        zmax = std::max(zmax, p.z);
    }
    const double um = 0.5 * (umin + umax);
    const double vm = 0.5 * (vmin + vmax);
    OrientedBox3 box;
    box.center = {c * um - s * vm, s * um + c * vm, 0.5 * (zmin + zmax)};
    box.dims = {std::max(umax - umin, kMinDim), std::max(vmax - vmin, kMinDim),
                std::max(zmax - zmin, kMinDim)};
    box.yaw = wrap_two_pi(yaw);
    return box;
}

// ---------------------------------------------------------------------------
// BEV polygon intersection

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

using Polygon2 = std::vector<Point2>;

inline Polygon2 bev_polygon(const OrientedBox3& box) {
    const auto corners = box_corners(box);
    Polygon2 poly(4);
    for (std::size_t i = 0; i < 4; ++i) poly[i] = {corners[i].x, corners[i].y};
    return poly;
}

inline double cross2(const Point2& o, const Point2& a, const Point2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline double polygon_area(const Polygon2& poly) {
    if (poly.size() < 3) return 0.0;
    double twice = 0.0;
    for (std::size_t i = 0, n = poly.size(); i < n; ++i) {
        const Point2& a = poly[i];
        const Point2& b = poly[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    return 0.5 * std::abs(twice);
}

// Sutherland-Hodgman: clips `subject` against the convex CCW polygon `clip`.
inline Polygon2 clip_convex(const Polygon2& subject, const Polygon2& clip) {
    Polygon2 out = subject;
    for (std::size_t e = 0, n = clip.size(); e < n && !out.empty(); ++e) {
        const Point2& a = clip[e];
        const Point2& b = clip[(e + 1) % n];
        Polygon2 input;
        input.swap(out);
        for (std::size_t i = 0, m = input.size(); i < m; ++i) {
            const Point2& cur = input[i];
            const Point2& prev = input[(i + m - 1) % m];
            const double dc = cross2(a, b, cur);
            const double dp = cross2(a, b, prev);
            const bool cur_in = dc >= 0.0;
            const bool prev_in = dp >= 0.0;
            if (cur_in != prev_in) {
                const double t = dp / (dp - dc);
                out.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
            }
            if (cur_in) out.push_back(cur);
        }
    }
    return out;
}

// Clipping runs in a frame centred on `a` so that small boxes far from the
// origin keep full relative precision.
inline double bev_intersection_area(const OrientedBox3& a, const OrientedBox3& b) {
    OrientedBox3 la = a, lb = b;
    la.center = {0.0, 0.0, 0.0};
    lb.center = {b.center.x - a.center.x, b.center.y - a.center.y, 0.0};
    const double area = polygon_area(clip_convex(bev_polygon(la), bev_polygon(lb)));
    return area < 1e-12 ? 0.0 : area;
}

inline double iou_bev(const OrientedBox3& a, const OrientedBox3& b) {
    const double inter = bev_intersection_area(a, b);
    if (inter <= 0.0) return 0.0;
    const double uni = a.bev_area() + b.bev_area() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

inline double z_overlap(const OrientedBox3& a, const OrientedBox3& b) {
    const double lo = std::max(a.center.z - 0.5 * a.dims.h, b.center.z - 0.5 * b.dims.h);
    const double hi = std::min(a.center.z + 0.5 * a.dims.h, b.center.z + 0.5 * b.dims.h);
    return std::max(hi - lo, 0.0);
}

inline double iou_3d(const OrientedBox3& a, const OrientedBox3& b) {
    const double dz = z_overlap(a, b);
    if (dz <= 0.0) return 0.0;
    const double inter = bev_intersection_area(a, b) * dz;
    if (inter <= 0.0) return 0.0;
    const double uni = a.volume() + b.volume() - inter;
    return std::clamp(inter / uni, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Monte-Carlo IoU, used only as an independent check of iou_3d.

struct IouEstimate {
    double iou = 0.0;
    double std_error = 0.0;
};

inline IouEstimate iou_oracle(const OrientedBox3& a, const OrientedBox3& b, std::size_t samples,
                              std::uint64_t seed) {
    if (samples < 10000) throw InvalidArgument("iou_oracle needs at least 1e4 samples");
    Point3 lo{INFINITY, INFINITY, INFINITY};
    Point3 hi{-INFINITY, -INFINITY, -INFINITY};
    for (const auto& box : {a, b}) {
        for (const Point3& c : box_corners(box)) {
            lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
            hi = {std::max(hi.x, c.x), std::max(hi.y, c.y), std::max(hi.z, c.z)};
        }
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(lo.x, hi.x), uy(lo.y, hi.y), uz(lo.z, hi.z);

    const double ca = std::cos(a.yaw), sa = std::sin(a.yaw);
    const double cb = std::cos(b.yaw), sb = std::sin(b.yaw);
    auto inside = [](const Point3& p, const OrientedBox3& box, double c, double s) {
        const Point3 d = p - box.center;
        return std::abs(c * d.x + s * d.y) <= 0.5 * box.dims.l &&
               std::abs(-s * d.x + c * d.y) <= 0.5 * box.dims.w &&
               std::abs(d.z) <= 0.5 * box.dims.h;
    };

    std::size_t n_union = 0, n_both = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        const Point3 p{ux(rng), uy(rng), uz(rng)};
        const bool in_a = inside(p, a, ca, sa);
        const bool in_b = inside(p, b, cb, sb);
        n_union += (in_a || in_b) ? 1 : 0;
        n_both += (in_a && in_b) ? 1 : 0;
    }
    if (n_union == 0) return {};
    const double p = static_cast<double>(n_both) / static_cast<double>(n_union);
    return {p, std::sqrt(p * (1.0 - p) / static_cast<double>(n_union))};
}

}  // namespace impdet
