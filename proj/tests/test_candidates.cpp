#include <gtest/gtest.h>

#include <random>
#include <set>

#include "impdet/candidates.hpp"
#include "impdet/scenegen.hpp"
#include "impdet/train.hpp"
#include "oracles.hpp"

using namespace impdet;

TEST(SeedGrid, EmptyAndSinglePoint) {
    EXPECT_TRUE(make_seed_grid(PointCloud{}, 0.5).empty());
    PointCloud one;
    one.push_back({1.2, -0.3, -1.0}, 0.5);
    const SeedGrid g = make_seed_grid(one, 0.5);
    ASSERT_EQ(g.size(), 1u);
    EXPECT_DOUBLE_EQ(g.positions[0].x, 1.25);
    EXPECT_DOUBLE_EQ(g.positions[0].y, -0.25);
    EXPECT_EQ(g.positions[0].z, 0.0);
    EXPECT_EQ(g.features[0].size(), kFeatureWidth);
    EXPECT_THROW(make_seed_grid(one, 0.0), InvalidArgument);
}

TEST(SeedGrid, OneSeedPerOccupiedCell) {
    SceneConfig c;
    c.seed = 4;
    const Scene s = generate_scene(c);
    std::set<std::pair<long long, long long>> cells;
    for (const Point3& p : s.cloud.points)
        cells.insert({static_cast<long long>(std::floor(p.x / 0.5)), static_cast<long long>(std::floor(p.y / 0.5))});
    const SeedGrid g = make_seed_grid(s.cloud, 0.5);
    EXPECT_EQ(g.size(), cells.size());
    std::set<std::pair<double, double>> unique;
    for (const Point3& p : g.positions) unique.insert({p.x, p.y});
    EXPECT_EQ(unique.size(), g.size());
    for (const auto& f : g.features)
        for (double v : f) EXPECT_TRUE(std::isfinite(v));
}

TEST(Centerness, Examples) {
    const auto b = make_box({0, 0, 0}, {4, 4, 2}, 0.0);
    EXPECT_DOUBLE_EQ(centerness(b.center, b), 1.0);
    EXPECT_EQ(centerness({5, 0, 0}, b), 0.0);
    // Face distances (1, 3), (2, 2), (1, 1).
    EXPECT_NEAR(centerness({1, 0, 0}, b), std::cbrt(1.0 / 3.0), 1e-12);
    EXPECT_NEAR(centerness({1, 0, 0}, b), 0.69336, 1e-5);
}

TEST(Centerness, MatchesDirectFormula) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-3, 3), d(0.5, 5), y(0, kTwoPi);
    for (int i = 0; i < 10000; ++i) {
        const auto b = make_box({u(rng), u(rng), u(rng)}, {d(rng), d(rng), d(rng)}, y(rng));
        const Point3 p = b.center + Point3{0.5 * u(rng), 0.5 * u(rng), 0.3 * u(rng)};
        EXPECT_NEAR(centerness(p, b), oracle::centerness(p, b), 1e-12);
    }
}

TEST(Centerness, MonotoneAlongRays) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(0.5, 5), y(0, kTwoPi), n(-1, 1);
    for (int i = 0; i < 300; ++i) {
        const auto b = make_box({0, 0, 0}, {d(rng), d(rng), d(rng)}, y(rng));
        Point3 dir{n(rng), n(rng), n(rng)};
        dir = (1.0 / norm(dir)) * dir;
        double prev = 1.0;
        for (int k = 1; k <= 100; ++k) {
            const Point3 p = b.center + (0.05 * k) * dir;
            const double c = centerness(p, b);
            EXPECT_LE(c, prev + 1e-15);
            EXPECT_LT(c, 1.0);
            prev = c;
        }
    }
}

TEST(Centerness, RigidInvariance) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2, 2), a(0, kTwoPi);
    const auto b = make_box({1, 1, 0}, {4, 2, 1.5}, 0.4);
    for (int i = 0; i < 500; ++i) {
        const Point3 p = b.center + Point3{u(rng), 0.5 * u(rng), 0.3 * u(rng)};
        const double r = a(rng);
        const Point3 t{u(rng), u(rng), u(rng)};
        auto move = [&](const Point3& q) {
            return Point3{std::cos(r) * q.x - std::sin(r) * q.y + t.x, std::sin(r) * q.x + std::cos(r) * q.y + t.y,
                          q.z + t.z};
        };
        EXPECT_NEAR(centerness(p, b), centerness(move(p), make_box(move(b.center), b.dims, b.yaw + r)), 1e-9);
    }
}

TEST(ShiftCandidates, OracleShifter) {
    const auto b = make_box({10, 5, -2}, {4, 2, 1.5}, 0.3);
    SeedGrid g;
    g.positions = {{10.2, 5.1, 0.0}, {30, 30, 0}};
    g.features = {Feature{}, Feature{}};
    const auto c = shift_candidates(g, oracle_shifter({b}), oracle_scorer({b}));
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c[0].position, b.center);
    EXPECT_DOUBLE_EQ(c[0].centerness, 1.0);
    EXPECT_EQ(c[1].position, g.positions[1]);
    EXPECT_EQ(c[1].centerness, 0.0);
    EXPECT_EQ(c[1].source_index, 1u);
    EXPECT_THROW(shift_candidates(SeedGrid{}, oracle_shifter({b}), oracle_scorer({b})), EmptyInput);
}

TEST(ShiftCandidates, FeatureOffsetIsAdded) {
    SeedGrid g;
    g.positions = {{0, 0, 0}};
    g.features = {Feature{1.0, 2.0}};
    const Shifter s = [](const Point3&, const Feature&) { return Shift{{1, 0, 0}, Feature{0.5, -1.0}}; };
    const CenternessScorer sc = [](const Point3&, const Feature&) { return 0.7; };
    const auto c = shift_candidates(g, s, sc);
    EXPECT_EQ(c[0].position, (Point3{1, 0, 0}));
    EXPECT_EQ(c[0].feature, (Feature{1.5, 1.0}));
    const Shifter bad = [](const Point3&, const Feature&) { return Shift{{}, Feature{1.0}}; };
    EXPECT_THROW(shift_candidates(g, bad, sc), ShapeMismatch);
}

namespace {

Candidate cand(Point3 p, double score, std::size_t idx) {
    Candidate c;
    c.position = p;
    c.centerness = score;
    c.source_index = idx;
    return c;
}

}  // namespace

TEST(CubeNms, Examples) {
    auto kept = cube_nms({cand({0, 0, 0}, 0.8, 0), cand({0.5, 0, 0}, 0.9, 1)});
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].centerness, 0.9);
    kept = cube_nms({cand({0, 0, 0}, 0.8, 0), cand({1.5, 1.5, 1.5}, 0.9, 1), cand({3, 3, 3}, 0.5, 2)});
    EXPECT_EQ(kept.size(), 3u);
    EXPECT_EQ(kDefaultTopK, 512u);
    EXPECT_THROW(cube_nms({}, 0), InvalidArgument);
    // One axis apart suffices to keep both.
    EXPECT_EQ(cube_nms({cand({0, 0, 0}, 0.8, 0), cand({0.2, 0.2, 1.2}, 0.7, 1)}).size(), 2u);
}

TEST(CubeNms, Properties) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 10), s(0, 1);
    std::vector<Candidate> cs;
    for (std::size_t i = 0; i < 2000; ++i) cs.push_back(cand({u(rng), u(rng), 0.3 * u(rng)}, s(rng), i));
    cs.push_back(cand({0, 0, 0}, 5e-5, 5000));
    const auto kept = cube_nms(cs, 64);
    EXPECT_LE(kept.size(), 64u);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        EXPECT_GE(kept[i].centerness, kMinCenterness);
        if (i) {
            EXPECT_LE(kept[i].centerness, kept[i - 1].centerness);
        }
        for (std::size_t j = 0; j < i; ++j) {
            const Point3 d = kept[i].position - kept[j].position;
            EXPECT_FALSE(std::abs(d.x) < 1 && std::abs(d.y) < 1 && std::abs(d.z) < 1);
        }
    }
}

TEST(CubeNms, TiesBrokenBySourceIndex) {
    const auto kept = cube_nms({cand({0, 0, 0}, 0.5, 7), cand({0.1, 0, 0}, 0.5, 3)});
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].source_index, 3u);
}

TEST(LearnedShifter, BeatsUnshiftedSeeds) {
    SceneConfig c;
    c.object_count = 6;
    std::vector<Scene> train, test;
    for (std::uint64_t i = 0; i < 50; ++i) {
        c.seed = 300 + i;
        train.push_back(generate_scene(c));
    }
    for (std::uint64_t i = 0; i < 5; ++i) {
        c.seed = 400 + i;
        test.push_back(generate_scene(c));
    }
    const auto ex = make_shifter_examples(train, 0.5);
    ShifterModel model;
    model.mlp().init(1);
    sgd(model.mlp().params(), ex.size(), SgdConfig{10, 0.05, 8, 2},
        [&](std::span<const double> p, std::span<const std::size_t> idx, std::span<double> g) {
            return shifter_loss(p, model, gather<ShifterExample>(ex, idx), g);
        });
    const auto held = make_shifter_examples(test, 0.5);
    ASSERT_FALSE(held.empty());
    double before = 0, after = 0;
    for (const auto& e : held) {
        before += norm(e.target_offset);
        after += norm(e.target_offset - model.predict(e.feature));
    }
    EXPECT_LT(after, before);
}
