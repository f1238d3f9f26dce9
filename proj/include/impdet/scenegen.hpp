#pragma once

// Deterministic synthetic driving scenes: oriented boxes resting on the ground
// plane, LiDAR-like points on the faces visible from a sensor at the origin,
// optional Gaussian noise and uniform background clutter.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "impdet/errors.hpp"
#include "impdet/geometry.hpp"

namespace impdet {

struct Range3 {
    double x_min = 0.0, x_max = 70.4;
    double y_min = -40.0, y_max = 40.0;
    double z_min = -3.0, z_max = 1.0;

    bool contains(const Point3& p) const {
        return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max && p.z >= z_min &&
               p.z <= z_max;
    }
    Point3 clamp(const Point3& p) const {
        return {std::clamp(p.x, x_min, x_max), std::clamp(p.y, y_min, y_max),
                std::clamp(p.z, z_min, z_max)};
    }
    friend bool operator==(const Range3&, const Range3&) = default;
};

struct SceneConfig {
    Range3 range;
    std::size_t object_count = 8;
    Dims dims_mean{3.9, 1.6, 1.56};
    Dims dims_std{0.2, 0.1, 0.1};
    std::size_t points_per_object_at_10m = 400;
    double density_exponent = 1.0;
    double noise_sigma = 0.0;
    double clutter_fraction = 0.0;
    std::uint64_t seed = 0;
    // Horizontal clearance kept between neighbouring boxes.
    double min_gap = 0.5;
    std::size_t placement_attempts = 500;

    void validate() const {
        const Range3& r = range;
        if (!(r.x_max > r.x_min && r.y_max > r.y_min && r.z_max > r.z_min))
            throw InvalidArgument("scene range is empty");
        if (!(density_exponent >= 0.0)) throw InvalidArgument("density_exponent must be >= 0");
        if (!(noise_sigma >= 0.0)) throw InvalidArgument("noise_sigma must be >= 0");
        if (!(clutter_fraction >= 0.0 && clutter_fraction < 1.0))
            throw InvalidArgument("clutter_fraction must lie in [0, 1)");
        if (!(dims_mean.l > 0.0 && dims_mean.w > 0.0 && dims_mean.h > 0.0))
            throw InvalidArgument("dims_mean must be positive");
        if (!(dims_std.l >= 0.0 && dims_std.w >= 0.0 && dims_std.h >= 0.0))
            throw InvalidArgument("dims_std must be non-negative");
        if (!(min_gap >= 0.0)) throw InvalidArgument("min_gap must be >= 0");
    }

    friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

struct Scene {
    std::vector<OrientedBox3> boxes;
    std::vector<std::string> labels;
    PointCloud cloud;
    SceneConfig config;

    friend bool operator==(const Scene&, const Scene&) = default;
};

namespace detail {

struct Face {
    Point3 normal;  // local frame, unit
    double area;
};

inline std::array<Face, 6> box_faces(const Dims& d) {
    return {{{{1, 0, 0}, d.w * d.h},
             {{-1, 0, 0}, d.w * d.h},
             {{0, 1, 0}, d.l * d.h},
             {{0, -1, 0}, d.l * d.h},
             {{0, 0, 1}, d.l * d.w},
             {{0, 0, -1}, d.l * d.w}}};
}

// Face is visible from the origin iff its outward normal faces the sensor.
inline bool face_visible(const OrientedBox3& box, const Face& f) {
    const Point3 local_center{0.5 * box.dims.l * f.normal.x, 0.5 * box.dims.w * f.normal.y,
                              0.5 * box.dims.h * f.normal.z};
    const Point3 world_center = from_box_frame(local_center, box);
    const Point3 world_normal = from_box_frame(f.normal, box) - box.center;
    return dot(world_normal, world_center) < 0.0;
}

template <typename Rng>
Point3 sample_on_face(const Dims& d, const Face& f, Rng& rng) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    const double a = u(rng), b = u(rng);
    if (f.normal.x != 0.0) return {0.5 * d.l * f.normal.x, a * d.w, b * d.h};
    if (f.normal.y != 0.0) return {a * d.l, 0.5 * d.w * f.normal.y, b * d.h};
    return {a * d.l, b * d.w, 0.5 * d.h * f.normal.z};
}

inline bool too_close(const OrientedBox3& a, const OrientedBox3& b, double gap) {
    OrientedBox3 grown = a;
    grown.dims.l += 2.0 * gap;
    grown.dims.w += 2.0 * gap;
    return bev_intersection_area(grown, b) > 0.0;
}

}  // namespace detail

// Expected point count for an object whose centre lies `dist` metres from the
// sensor in BEV (distance clamped to >= 1 m).
inline std::size_t object_point_count(const SceneConfig& cfg, double dist) {
    const double d = std::max(dist, 1.0);
    const double n = static_cast<double>(cfg.points_per_object_at_10m) *
                     std::pow(10.0 / d, cfg.density_exponent);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(n)));
}

inline Scene generate_scene(const SceneConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Scene scene;
    scene.config = cfg;
    const Range3& r = cfg.range;

    for (std::size_t obj = 0; obj < cfg.object_count; ++obj) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt < cfg.placement_attempts && !placed; ++attempt) {
            Dims d{cfg.dims_mean.l + cfg.dims_std.l * gauss(rng),
                   cfg.dims_mean.w + cfg.dims_std.w * gauss(rng),
                   cfg.dims_mean.h + cfg.dims_std.h * gauss(rng)};
            d.l = std::max(d.l, 0.1 * cfg.dims_mean.l);
            d.w = std::max(d.w, 0.1 * cfg.dims_mean.w);
            d.h = std::max(d.h, 0.1 * cfg.dims_mean.h);
            const double yaw = kTwoPi * unit(rng);
            const double half_diag = 0.5 * std::hypot(d.l, d.w);
            const double x0 = r.x_min + half_diag, x1 = r.x_max - half_diag;
            const double y0 = r.y_min + half_diag, y1 = r.y_max - half_diag;
            const double cx = x0 + (x1 - x0) * unit(rng);
            const double cy = y0 + (y1 - y0) * unit(rng);
            if (x1 < x0 || y1 < y0 || d.h > r.z_max - r.z_min) continue;
            const OrientedBox3 box = make_box({cx, cy, r.z_min + 0.5 * d.h}, d, yaw);
            const bool clash = std::any_of(scene.boxes.begin(), scene.boxes.end(), [&](const OrientedBox3& o) {
                return detail::too_close(box, o, cfg.min_gap);
            });
            if (clash) continue;
            scene.boxes.push_back(box);
            scene.labels.emplace_back("Car");
            placed = true;
        }
        if (!placed) throw PlacementFailure(scene.boxes.size(), cfg.object_count);
    }

    std::size_t object_points = 0;
    for (const OrientedBox3& box : scene.boxes) {
        const auto faces = detail::box_faces(box.dims);
        std::vector<const detail::Face*> visible;
        for (const auto& f : faces) {
            if (detail::face_visible(box, f)) visible.push_back(&f);
        }
        // Sensor inside the footprint: every face counts.
        if (visible.empty()) {
            for (const auto& f : faces) visible.push_back(&f);
        }
        std::vector<double> areas;
        for (const auto* f : visible) areas.push_back(f->area);
        std::discrete_distribution<std::size_t> pick(areas.begin(), areas.end());

        const std::size_t n = object_point_count(cfg, std::hypot(box.center.x, box.center.y));
        for (std::size_t i = 0; i < n; ++i) {
            const detail::Face& f = *visible[pick(rng)];
            Point3 p = from_box_frame(detail::sample_on_face(box.dims, f, rng), box);
            if (cfg.noise_sigma > 0.0) {
                p += cfg.noise_sigma * Point3{gauss(rng), gauss(rng), gauss(rng)};
                p = r.clamp(p);
            }
            scene.cloud.push_back(p, unit(rng));
        }
        object_points += n;
    }

    if (cfg.clutter_fraction > 0.0) {
        const auto n_clutter = static_cast<std::size_t>(std::llround(
            cfg.clutter_fraction / (1.0 - cfg.clutter_fraction) * static_cast<double>(object_points)));
        for (std::size_t i = 0; i < n_clutter; ++i) {
            const Point3 p{r.x_min + (r.x_max - r.x_min) * unit(rng),
                           r.y_min + (r.y_max - r.y_min) * unit(rng),
                           r.z_min + (r.z_max - r.z_min) * unit(rng)};
            scene.cloud.push_back(p, unit(rng));
        }
    }
    return scene;
}

// n scenes from one template; scene i uses seed + i.
inline std::vector<Scene> generate_scenes(SceneConfig cfg, std::size_t n, std::uint64_t seed) {
    std::vector<Scene> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        cfg.seed = seed + i;
        out.push_back(generate_scene(cfg));
    }
    return out;
}

// Indices of cloud points inside `box`.
inline std::vector<std::size_t> points_inside(const PointCloud& cloud, const OrientedBox3& box) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (point_in_box(cloud.points[i], box)) idx.push_back(i);
    }
    return idx;
}

// Removes floor(fraction * n_inside) uniformly chosen points inside the box.
inline Scene mask_inside_points(const Scene& scene, std::size_t box_index, double fraction,
                                std::uint64_t seed) {
    if (box_index >= scene.boxes.size()) throw IndexOutOfRange(box_index, scene.boxes.size());
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidArgument("mask fraction must lie in [0, 1]");
    std::vector<std::size_t> inside = points_inside(scene.cloud, scene.boxes[box_index]);
    const auto n_drop = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(inside.size()) + 1e-9));
    if (n_drop == 0) return scene;

    std::mt19937_64 rng(seed);
    std::shuffle(inside.begin(), inside.end(), rng);
    std::vector<char> drop(scene.cloud.size(), 0);
    for (std::size_t i = 0; i < n_drop; ++i) drop[inside[i]] = 1;

    Scene out;
    out.boxes = scene.boxes;
    out.labels = scene.labels;
    out.config = scene.config;
    out.cloud.points.reserve(scene.cloud.size() - n_drop);
    out.cloud.intensity.reserve(scene.cloud.size() - n_drop);
    for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
        if (!drop[i]) out.cloud.push_back(scene.cloud.points[i], scene.cloud.intensity[i]);
    }
    return out;
}

inline OrientedBox3 perturb_box_center(const OrientedBox3& box, const Point3& max_shift,
                                       std::uint64_t seed) {
    if (!(max_shift.x >= 0.0 && max_shift.y >= 0.0 && max_shift.z >= 0.0))
        throw InvalidArgument("max_shift components must be >= 0");
    std::mt19937_64 rng(seed);
    auto shift = [&](double d) {
        if (d == 0.0) return 0.0;
        return std::uniform_real_distribution<double>(-d, d)(rng);
    };
    OrientedBox3 out = box;
    out.center.x += shift(max_shift.x);
    out.center.y += shift(max_shift.y);
    out.center.z += shift(max_shift.z);
    return out;
}

}  // namespace impdet
