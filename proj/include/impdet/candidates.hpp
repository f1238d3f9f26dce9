#pragma once

// Candidate-centre proposal: BEV seeds are shifted toward object centres,
// scored by 3D centerness and thinned by unit-cube NMS.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "impdet/features.hpp"
#include "impdet/geometry.hpp"
#include "impdet/nn.hpp"
#include "impdet/spatial_index.hpp"

namespace impdet {

inline constexpr std::size_t kDefaultTopK = 512;
inline constexpr double kMinCenterness = 1e-4;

struct Candidate {
    Point3 position;
    Feature feature;
    double centerness = 0.0;
    std::size_t source_index = 0;
};

struct SeedGrid {
    std::vector<Point3> positions;  // z = 0
    std::vector<Feature> features;
    double cell_size = 0.5;

    std::size_t size() const { return positions.size(); }
    bool empty() const { return positions.empty(); }
};

// One seed per occupied BEV cell, placed at the cell centre with z = 0.
// Seeds are ordered by (cell x, cell y). An empty provider leaves features empty.
inline SeedGrid make_seed_grid(const PointCloud& cloud, double cell_size,
                               const FeatureProvider& provider = default_seed_provider()) {
    if (!(cell_size > 0.0)) throw InvalidArgument("cell_size must be positive");
    SeedGrid grid;
    grid.cell_size = cell_size;
    if (cloud.empty()) return grid;

    std::map<std::pair<long long, long long>, bool> cells;
    for (const Point3& p : cloud.points) {
        cells[{static_cast<long long>(std::floor(p.x / cell_size)),
               static_cast<long long>(std::floor(p.y / cell_size))}] = true;
    }
    const GridIndex index(cloud.points, 1.0);
    for (const auto& [key, unused] : cells) {
        const Point3 seed{(static_cast<double>(key.first) + 0.5) * cell_size,
                          (static_cast<double>(key.second) + 0.5) * cell_size, 0.0};
        grid.positions.push_back(seed);
        grid.features.push_back(provider ? provider(cloud, index, seed) : Feature{});
    }
    return grid;
}

// Cube root of the per-axis min/max face-distance ratios; 0 outside the box.
inline double centerness(const Point3& p, const OrientedBox3& box) {
    const Point3 q = to_box_frame(p, box);
    if (!detail::local_inside(q, box.dims)) return 0.0;
    auto ratio = [](double half, double c) {
        const double a = std::max(half - c, 0.0);
        const double b = std::max(half + c, 0.0);
        const double hi = std::max(a, b);
        return hi > 0.0 ? std::min(a, b) / hi : 0.0;
    };
    const double prod = ratio(0.5 * box.dims.l, q.x) * ratio(0.5 * box.dims.w, q.y) *
                        ratio(0.5 * box.dims.h, q.z);
    return std::clamp(std::cbrt(prod), 0.0, 1.0);
}

// Predicted position offset and feature offset of one seed. An empty
// feature_offset means zero.
struct Shift {
    Point3 position_offset;
    Feature feature_offset;
};

using Shifter = std::function<Shift(const Point3& seed, const Feature& seed_feature)>;
using CenternessScorer = std::function<double(const Point3& position, const Feature& feature)>;

// Offset to the centre of the first box whose footprint contains the seed;
// zero for seeds outside every box.
inline Shifter oracle_shifter(std::vector<OrientedBox3> boxes) {
    return [boxes = std::move(boxes)](const Point3& seed, const Feature&) {
        for (const OrientedBox3& b : boxes) {
            if (point_in_box_bev(seed, b)) return Shift{b.center - seed, {}};
        }
        return Shift{};
    };
}

inline CenternessScorer oracle_scorer(std::vector<OrientedBox3> boxes) {
    return [boxes = std::move(boxes)](const Point3& p, const Feature&) {
        double best = 0.0;
        for (const OrientedBox3& b : boxes) best = std::max(best, centerness(p, b));
        return best;
    };
}

// Wraps a shifter so the feature offset is the provider feature at the
// shifted position minus the seed feature.
inline Shifter refeaturing_shifter(Shifter base, const PointCloud& cloud, const GridIndex& index,
                                   FeatureProvider provider) {
    return [base = std::move(base), &cloud, &index, provider = std::move(provider)](
               const Point3& seed, const Feature& f) {
        Shift s = base(seed, f);
        const Feature moved = provider(cloud, index, seed + s.position_offset);
        s.feature_offset.resize(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) s.feature_offset[i] = moved[i] - f[i];
        return s;
    };
}

inline std::vector<Candidate> shift_candidates(const SeedGrid& grid, const Shifter& shifter,
                                               const CenternessScorer& scorer) {
    if (grid.empty()) throw EmptyInput("shift_candidates needs a non-empty seed grid");
    std::vector<Candidate> out;
    out.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const Shift s = shifter(grid.positions[i], grid.features[i]);
        Candidate c;
        c.position = grid.positions[i] + s.position_offset;
        c.feature = grid.features[i];
        if (!s.feature_offset.empty()) {
            if (s.feature_offset.size() != c.feature.size())
                throw ShapeMismatch("feature offset width differs from seed feature width");
            for (std::size_t j = 0; j < c.feature.size(); ++j) c.feature[j] += s.feature_offset[j];
        }
        c.centerness = std::clamp(scorer(c.position, c.feature), 0.0, 1.0);
        c.source_index = i;
        out.push_back(std::move(c));
    }
    return out;
}

// Greedy NMS treating each candidate as a 1 m axis-aligned cube: a candidate
// is suppressed when its centre lies within 1 m of a kept one on all three
// axes (positive cube overlap). Candidates below kMinCenterness are dropped.
inline std::vector<Candidate> cube_nms(std::vector<Candidate> cands, std::size_t k = kDefaultTopK) {
    if (k < 1) throw InvalidArgument("cube_nms needs k >= 1");
    std::erase_if(cands, [](const Candidate& c) { return c.centerness < kMinCenterness; });
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
        if (a.centerness != b.centerness) return a.centerness > b.centerness;
        return a.source_index < b.source_index;
    });
    std::vector<Candidate> kept;
    for (Candidate& c : cands) {
        if (kept.size() >= k) break;
        const bool overlaps = std::any_of(kept.begin(), kept.end(), [&](const Candidate& o) {
            return std::abs(o.position.x - c.position.x) < 1.0 &&
                   std::abs(o.position.y - c.position.y) < 1.0 &&
                   std::abs(o.position.z - c.position.z) < 1.0;
        });
        if (!overlaps) kept.push_back(std::move(c));
    }
    return kept;
}

// ---------------------------------------------------------------------------
// Learned shifter and centerness head.

// Regresses the BEV-seed -> object-centre offset from the seed feature.
class ShifterModel {
public:
    explicit ShifterModel(std::size_t feature_width = kFeatureWidth, std::size_t hidden = 32)
        : mlp_({feature_width, hidden, 3}) {}

    nn::Mlp& mlp() { return mlp_; }
    const nn::Mlp& mlp() const { return mlp_; }

    Point3 predict(const Feature& f) const {
        const auto t = mlp_.forward(f);
        const auto& y = t.output();
        return {y[0], y[1], y[2]};
    }

private:
    nn::Mlp mlp_;
};

inline Shifter learned_shifter(ShifterModel model) {
    return [model = std::move(model)](const Point3&, const Feature& f) {
        return Shift{model.predict(f), {}};
    };
}

// Sigmoid of an affine map of the candidate feature.
class CenternessHead {
public:
    explicit CenternessHead(std::size_t feature_width = kFeatureWidth) : mlp_({feature_width, 1}) {}

    nn::Mlp& mlp() { return mlp_; }
    const nn::Mlp& mlp() const { return mlp_; }

    double predict(const Feature& f) const { return nn::sigmoid(mlp_.forward(f).output()[0]); }

private:
    nn::Mlp mlp_;
};

inline CenternessScorer learned_scorer(CenternessHead head) {
    return [head = std::move(head)](const Point3&, const Feature& f) { return head.predict(f); };
}

}  // namespace impdet
