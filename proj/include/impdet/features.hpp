#pragma once

// Hand-crafted local point statistics standing in for learned backbone
// features. Every feature vector has kFeatureWidth entries; unused trailing
// entries are zero.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "impdet/geometry.hpp"
#include "impdet/spatial_index.hpp"

namespace impdet {

inline constexpr std::size_t kFeatureWidth = 32;
// Reserved for the sampling stage: distance from a sampled location to the
// nearest observed point (0 for observed points).
inline constexpr std::size_t kSurfaceDistanceSlot = kFeatureWidth - 1;

using Feature = std::vector<double>;

// Signature of a pluggable feature source: features of the location `query`
// computed from the cloud behind `index`.
using FeatureProvider =
    std::function<Feature(const PointCloud& cloud, const GridIndex& index, const Point3& query)>;

namespace detail {

// Layout: [0] log(1+count), [1] mean dz, [2] mean intensity,
// [3..5] covariance eigenvalues (descending), [6..7] BEV principal direction
// as (cos 2phi, sin 2phi) scaled by anisotropy, [8..10] mean offset from the
// query, [11] vertical extent, [12..13] principal BEV axis u = (cos phi,
// sin phi) with phi in (-pi/2, pi/2], [14..15] half extents along u and its
// normal v, [16..17] centre of those extents relative to the query in (u, v).
inline Feature local_stats(const PointCloud& cloud, std::span<const std::size_t> idx,
                           const Point3& query) {
    Feature f(kFeatureWidth, 0.0);
    if (idx.empty()) return f;
    const double n = static_cast<double>(idx.size());
    Point3 mean{};
    double mean_r = 0.0;
    double zmin = INFINITY, zmax = -INFINITY;
    for (std::size_t i : idx) {
        mean += cloud.points[i];
        mean_r += cloud.intensity[i];
        zmin = std::min(zmin, cloud.points[i].z);
        zmax = std::max(zmax, cloud.points[i].z);
    }
    mean = (1.0 / n) * mean;
    mean_r /= n;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (std::size_t i : idx) {
        const Point3 d = cloud.points[i] - mean;
        const Eigen::Vector3d v(d.x, d.y, d.z);
        cov += v * v.transpose();
    }
    cov /= n;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov, Eigen::EigenvaluesOnly);
    const Eigen::Vector3d ev = eig.eigenvalues();  // ascending

    const double cxx = cov(0, 0), cyy = cov(1, 1), cxy = cov(0, 1);
    const double spread = cxx + cyy;
    const double aniso = std::sqrt((cxx - cyy) * (cxx - cyy) + 4.0 * cxy * cxy);
    f[0] = std::log1p(n);
    f[1] = mean.z - query.z;
    f[2] = mean_r;
    f[3] = ev(2);
    f[4] = ev(1);
    f[5] = ev(0);
    if (spread > 1e-12 && aniso > 1e-12) {
        f[6] = (cxx - cyy) / spread;
        f[7] = 2.0 * cxy / spread;
    }
    f[8] = mean.x - query.x;
    f[9] = mean.y - query.y;
    f[10] = mean.z - query.z;
    f[11] = zmax - zmin;

    const double phi = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
    const double ux = std::cos(phi), uy = std::sin(phi);
    double umin = INFINITY, umax = -INFINITY, vmin = INFINITY, vmax = -INFINITY;
    for (std::size_t i : idx) {
        const double dx = cloud.points[i].x - query.x, dy = cloud.points[i].y - query.y;
        const double u = ux * dx + uy * dy, v = -uy * dx + ux * dy;
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    f[12] = ux;
    f[13] = uy;
    f[14] = 0.5 * (umax - umin);
    f[15] = 0.5 * (vmax - vmin);
    f[16] = 0.5 * (umax + umin);
    f[17] = 0.5 * (vmax + vmin);
    return f;
}

}  // namespace detail

// Statistics over the points whose BEV distance to the query is below radius.
struct LocalStatsProvider {
    double radius = 2.0;

    Feature operator()(const PointCloud& cloud, const GridIndex& index, const Point3& query) const {
        const auto idx = index.within_bev(query, radius);
        return detail::local_stats(cloud, idx, query);
    }
};

// Per-point features for a whole cloud, evaluated with `provider` at each point.
inline std::vector<Feature> point_features(const PointCloud& cloud, const GridIndex& index,
                                           const FeatureProvider& provider) {
    std::vector<Feature> out;
    out.reserve(cloud.size());
    for (const Point3& p : cloud.points) out.push_back(provider(cloud, index, p));
    return out;
}

inline FeatureProvider default_point_provider() { return LocalStatsProvider{1.0}; }
inline FeatureProvider default_seed_provider() { return LocalStatsProvider{2.0}; }

}  // namespace impdet
