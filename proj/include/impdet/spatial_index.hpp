#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "impdet/geometry.hpp"

namespace impdet {

// Uniform BEV hash grid over a fixed point set. Queries return indices into
// the point span the index was built from, in ascending order.
class GridIndex {
public:
    GridIndex() = default;

    GridIndex(std::span<const Point3> points, double cell_size)
        : points_(points.begin(), points.end()), cell_(cell_size) {
        if (!(cell_size > 0.0)) throw InvalidArgument("grid cell size must be positive");
        for (std::size_t i = 0; i < points_.size(); ++i) {
            cells_[key(cell_of(points_[i].x), cell_of(points_[i].y))].push_back(i);
        }
    }

    std::size_t size() const { return points_.size(); }
    const std::vector<Point3>& points() const { return points_; }

    // Indices with horizontal distance strictly below `radius`.
    std::vector<std::size_t> within_bev(const Point3& q, double radius) const {
        return collect(q, radius, [&](const Point3& p) {
            const double dx = p.x - q.x, dy = p.y - q.y;
            return dx * dx + dy * dy < radius * radius;
        });
    }

    // Indices with Euclidean distance strictly below `radius`.
    std::vector<std::size_t> within(const Point3& q, double radius) const {
        return collect(q, radius, [&](const Point3& p) {
            const Point3 d = p - q;
            return dot(d, d) < radius * radius;
        });
    }

private:
    static std::uint64_t key(std::int64_t cx, std::int64_t cy) {
        return (static_cast<std::uint64_t>(cx) << 32) ^ (static_cast<std::uint64_t>(cy) & 0xffffffffULL);
    }
    std::int64_t cell_of(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }

    template <typename Pred>
    std::vector<std::size_t> collect(const Point3& q, double radius, Pred&& accept) const {
        std::vector<std::size_t> out;
        if (points_.empty()) return out;
        const std::int64_t x0 = cell_of(q.x - radius), x1 = cell_of(q.x + radius);
        const std::int64_t y0 = cell_of(q.y - radius), y1 = cell_of(q.y + radius);
        for (std::int64_t cx = x0; cx <= x1; ++cx) {
            for (std::int64_t cy = y0; cy <= y1; ++cy) {
                auto it = cells_.find(key(cx, cy));
                if (it == cells_.end()) continue;
                for (std::size_t i : it->second) {
                    if (accept(points_[i])) out.push_back(i);
                }
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    std::vector<Point3> points_;
    double cell_ = 1.0;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

}  // namespace impdet
