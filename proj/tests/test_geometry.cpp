#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "impdet/geometry.hpp"
#include "oracles.hpp"

using namespace impdet;

namespace {

OrientedBox3 random_box(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> c(-5.0, 5.0), d(0.3, 4.0), y(0.0, kTwoPi);
    return make_box({c(rng), c(rng), c(rng)}, {d(rng), d(rng), d(rng)}, y(rng));
}

}  // namespace

TEST(BoxFrame, CenterMapsToOrigin) {
    const auto b = make_box({1, 2, 3}, {2, 1, 1}, 0.7);
    const Point3 q = to_box_frame(b.center, b);
    EXPECT_EQ(q.x, 0.0);
    EXPECT_EQ(q.y, 0.0);
    EXPECT_EQ(q.z, 0.0);
}

TEST(BoxFrame, ZeroYawIsTranslation) {
    const auto b = make_box({1, -2, 0.5}, {2, 1, 1}, 0.0);
    const Point3 q = to_box_frame(b.center + Point3{1, 2, 3}, b);
    EXPECT_DOUBLE_EQ(q.x, 1.0);
    EXPECT_DOUBLE_EQ(q.y, 2.0);
    EXPECT_DOUBLE_EQ(q.z, 3.0);
}

TEST(BoxFrame, QuarterTurnSignConvention) {
    // Positive yaw is CCW, so a point on +y lands on +x of the box frame.
    const auto b = make_box({0, 0, 0}, {4, 2, 2}, std::numbers::pi / 2);
    const Point3 q = to_box_frame({0, 1.9, 0}, b);
    EXPECT_NEAR(q.x, 1.9, 1e-12);
    EXPECT_NEAR(q.y, 0.0, 1e-12);
}

TEST(BoxFrame, RoundTrip) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    for (int i = 0; i < 1000; ++i) {
        const auto b = random_box(rng);
        const Point3 p{u(rng), u(rng), u(rng)};
        const Point3 r = from_box_frame(to_box_frame(p, b), b);
        EXPECT_NEAR(r.x, p.x, 1e-12);
        EXPECT_NEAR(r.y, p.y, 1e-12);
        EXPECT_NEAR(r.z, p.z, 1e-12);
    }
}

TEST(PointInBox, CenterAndFarPoint) {
    const auto b = make_box({1, 1, 1}, {2, 1, 1}, 1.0);
    EXPECT_TRUE(point_in_box(b.center, b));
    // Half diagonal is sqrt(6) / 2 ~ 1.22.
    EXPECT_FALSE(point_in_box(b.center + Point3{1.3, 0.0, 0.0}, b));
    EXPECT_FALSE(point_in_box(b.center + Point3{0.0, -0.9, 0.9}, b));
}

TEST(PointInBox, SurfaceCountsAsInside) {
    const auto b = make_box({0, 0, 0}, {2, 2, 2}, 0.0);
    EXPECT_TRUE(point_in_box({1, 0, 0}, b));
    EXPECT_TRUE(point_in_box({1, 1, 1}, b));
    EXPECT_FALSE(point_in_box({1.001, 0, 0}, b));
}

TEST(PointInBox, AgreesWithRasterisation) {
    // Voxel rasterisation of the box at 2 cm; points sampled at voxel centres
    // away from the boundary band must agree exactly.
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    const auto b = make_box({0.2, -0.1, 0.0}, {3.9, 1.6, 1.5}, 0.6);
    const double step = 0.02;
    std::size_t checked = 0;
    for (int i = 0; i < 10000; ++i) {
        Point3 p{u(rng), u(rng), u(rng)};
        p = {std::round(p.x / step) * step, std::round(p.y / step) * step, std::round(p.z / step) * step};
        EXPECT_EQ(point_in_box(p, b), oracle::inside(p, b));
        ++checked;
    }
    EXPECT_EQ(checked, 10000u);
}

TEST(PointInBox, RigidInvariance) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-3.0, 3.0), a(0.0, kTwoPi);
    for (int i = 0; i < 1000; ++i) {
        const auto b = random_box(rng);
        const Point3 p{u(rng), u(rng), u(rng)};
        const double r = a(rng);
        const Point3 t{u(rng), u(rng), u(rng)};
        auto move = [&](const Point3& q) {
            return Point3{std::cos(r) * q.x - std::sin(r) * q.y + t.x, std::sin(r) * q.x + std::cos(r) * q.y + t.y,
                          q.z + t.z};
        };
        const auto mb = make_box(move(b.center), b.dims, b.yaw + r);
        const Point3 q = to_box_frame(p, b);
        const double margin = std::min({std::abs(std::abs(q.x) - 0.5 * b.dims.l),
                                        std::abs(std::abs(q.y) - 0.5 * b.dims.w),
                                        std::abs(std::abs(q.z) - 0.5 * b.dims.h)});
        if (margin < 1e-9) continue;
        EXPECT_EQ(point_in_box(p, b), point_in_box(move(p), mb));
    }
}

TEST(Corners, UnitCube) {
    const auto c = box_corners(make_box({0, 0, 0}, {1, 1, 1}, 0.0));
    for (const Point3& p : c) {
        EXPECT_DOUBLE_EQ(std::abs(p.x), 0.5);
        EXPECT_DOUBLE_EQ(std::abs(p.y), 0.5);
        EXPECT_DOUBLE_EQ(std::abs(p.z), 0.5);
    }
    EXPECT_DOUBLE_EQ(c[0].x, 0.5);
    EXPECT_DOUBLE_EQ(c[0].y, 0.5);
    EXPECT_DOUBLE_EQ(c[0].z, -0.5);
    EXPECT_DOUBLE_EQ(c[4].z, 0.5);
}

TEST(Corners, CentroidIsCenter) {
    std::mt19937_64 rng(4);
    for (int i = 0; i < 200; ++i) {
        const auto b = random_box(rng);
        Point3 s;
        for (const Point3& p : box_corners(b)) s += p;
        EXPECT_NEAR(s.x / 8, b.center.x, 1e-12);
        EXPECT_NEAR(s.y / 8, b.center.y, 1e-12);
        EXPECT_NEAR(s.z / 8, b.center.z, 1e-12);
    }
}

TEST(Corners, HalfTurnMapsSetOntoItself) {
    const auto b = make_box({1, 2, 0}, {3, 1, 1}, 0.4);
    auto flipped = b;
    flipped.yaw = wrap_two_pi(b.yaw + std::numbers::pi);
    const auto c1 = box_corners(b), c2 = box_corners(flipped);
    for (const Point3& p : c1) {
        double best = 1e9;
        for (const Point3& q : c2) best = std::min(best, distance(p, q));
        EXPECT_LT(best, 1e-12);
    }
}

TEST(NearestFace, Examples) {
    EXPECT_DOUBLE_EQ(nearest_face_distance({0, 0, 0}, make_box({0, 0, 0}, {2, 2, 2}, 0.0)), 1.0);
    EXPECT_DOUBLE_EQ(nearest_face_distance({0, 1, 0.3}, make_box({0, 0, 0}, {2, 2, 2}, 0.0)), 0.0);
    EXPECT_DOUBLE_EQ(nearest_face_distance({1, 0.5, 0}, make_box({0, 0, 0}, {4, 2, 2}, 0.0)), 0.5);
    EXPECT_THROW(nearest_face_distance({3, 0, 0}, make_box({0, 0, 0}, {2, 2, 2}, 0.0)), OutsidePoint);
}

TEST(MinBoxAtYaw, RecoversBoxFromCorners) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 100; ++i) {
        const auto b = random_box(rng);
        const auto c = box_corners(b);
        const auto r = min_box_at_yaw(std::vector<Point3>(c.begin(), c.end()), b.yaw);
        EXPECT_NEAR(r.dims.l, b.dims.l, 1e-9);
        EXPECT_NEAR(r.dims.w, b.dims.w, 1e-9);
        EXPECT_NEAR(r.dims.h, b.dims.h, 1e-9);
        EXPECT_NEAR(distance(r.center, b.center), 0.0, 1e-9);
    }
}

TEST(MinBoxAtYaw, SinglePointAndEmpty) {
    const std::vector<Point3> one{{1, 2, 3}};
    const auto r = min_box_at_yaw(one, 0.3);
    EXPECT_DOUBLE_EQ(r.dims.l, kMinDim);
    EXPECT_DOUBLE_EQ(r.dims.w, kMinDim);
    EXPECT_DOUBLE_EQ(r.dims.h, kMinDim);
    EXPECT_NEAR(distance(r.center, one[0]), 0.0, 1e-12);
    EXPECT_THROW(min_box_at_yaw(std::vector<Point3>{}, 0.0), EmptyInput);
}

TEST(MinBoxAtYaw, TightAndContaining) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-2.0, 2.0), a(0.0, kTwoPi);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Point3> pts(20);
        for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
        const double yaw = a(rng);
        const auto b = min_box_at_yaw(pts, yaw);
        for (const Point3& p : pts) EXPECT_TRUE(point_in_box(p, b));
        // Each of the six faces is touched by some point.
        double faces[6] = {1e9, 1e9, 1e9, 1e9, 1e9, 1e9};
        for (const Point3& p : pts) {
            const Point3 q = to_box_frame(p, b);
            faces[0] = std::min(faces[0], std::abs(0.5 * b.dims.l - q.x));
            faces[1] = std::min(faces[1], std::abs(0.5 * b.dims.l + q.x));
            faces[2] = std::min(faces[2], std::abs(0.5 * b.dims.w - q.y));
            faces[3] = std::min(faces[3], std::abs(0.5 * b.dims.w + q.y));
            faces[4] = std::min(faces[4], std::abs(0.5 * b.dims.h - q.z));
            faces[5] = std::min(faces[5], std::abs(0.5 * b.dims.h + q.z));
        }
        for (double f : faces) EXPECT_LT(f, 1e-9);
        // Brute-force extent scan in the rotated frame gives the same volume.
        double umin = 1e9, umax = -1e9, vmin = 1e9, vmax = -1e9, zmin = 1e9, zmax = -1e9;
        for (const Point3& p : pts) {
            const double uu = std::cos(yaw) * p.x + std::sin(yaw) * p.y;
            const double vv = -std::sin(yaw) * p.x + std::cos(yaw) * p.y;
            umin = std::min(umin, uu), umax = std::max(umax, uu);
            vmin = std::min(vmin, vv), vmax = std::max(vmax, vv);
            zmin = std::min(zmin, p.z), zmax = std::max(zmax, p.z);
        }
        EXPECT_NEAR(b.volume(), (umax - umin) * (vmax - vmin) * (zmax - zmin), 1e-9);
    }
}

TEST(Iou, IdenticalAndDisjoint) {
    const auto a = make_box({0, 0, 0}, {2, 1, 1}, 0.3);
    EXPECT_NEAR(iou_3d(a, a), 1.0, 1e-12);
    EXPECT_NEAR(iou_bev(a, a), 1.0, 1e-12);
    const auto b = make_box({10, 0, 0}, {2, 1, 1}, 0.3);
    EXPECT_EQ(iou_3d(a, b), 0.0);
    const auto c = make_box({0, 0, 5}, {2, 1, 1}, 0.3);
    EXPECT_EQ(iou_3d(a, c), 0.0);
    EXPECT_NEAR(iou_bev(a, c), 1.0, 1e-12);
}

// Millimetre boxes tens of metres out: relative precision must not depend on
// distance from the origin.
TEST(Iou, SmallBoxesFarFromOrigin) {
    for (double yaw : {0.0, 0.3, 1.2}) {
        const auto a = make_box({60.123, -37.9, 1.1}, {0.001, 0.001, 0.001}, yaw);
        EXPECT_NEAR(iou_3d(a, a), 1.0, 1e-12);
        OrientedBox3 swapped = a;
        swapped.yaw += kHalfPi;
        EXPECT_NEAR(iou_3d(a, swapped), 1.0, 1e-12);
        auto half = a;
        half.center = from_box_frame({0.0005, 0, 0}, a);
        EXPECT_NEAR(iou_bev(a, half), 1.0 / 3.0, 1e-9);
    }
}

TEST(Iou, OffsetUnitCubes) {
    const auto a = make_box({0, 0, 0}, {1, 1, 1}, 0.0);
    const auto b = make_box({0.5, 0, 0}, {1, 1, 1}, 0.0);
    EXPECT_NEAR(iou_bev(a, b), 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(iou_3d(a, b), 1.0 / 3.0, 1e-12);
}

TEST(Iou, SymmetricBoundedTranslationInvariant) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    for (int i = 0; i < 500; ++i) {
        const auto a = random_box(rng), b = random_box(rng);
        const double v = iou_3d(a, b);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        EXPECT_NEAR(v, iou_3d(b, a), 1e-12);
        EXPECT_NEAR(iou_bev(a, b), iou_bev(b, a), 1e-12);
        const Point3 t{u(rng), u(rng), u(rng)};
        auto ta = a, tb = b;
        ta.center += t;
        tb.center += t;
        EXPECT_NEAR(iou_3d(ta, tb), v, 1e-9);
    }
}

TEST(Iou, AxisAlignedClosedForm) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> c(-2.0, 2.0), d(0.5, 3.0);
    std::bernoulli_distribution flip(0.5);
    for (int i = 0; i < 100; ++i) {
        const auto a = make_box({c(rng), c(rng), 0}, {d(rng), d(rng), 1}, flip(rng) ? std::numbers::pi : 0.0);
        const auto b = make_box({c(rng), c(rng), 0}, {d(rng), d(rng), 1}, flip(rng) ? std::numbers::pi : 0.0);
        EXPECT_NEAR(iou_bev(a, b), oracle::aligned_iou_bev(a, b), 1e-9);
    }
}

TEST(Iou, BevAgreesWithMonteCarlo) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> c(-1.5, 1.5);
    for (int i = 0; i < 1000; ++i) {
        auto a = random_box(rng), b = random_box(rng);
        a.center = {c(rng), c(rng), 0.0};
        b.center = {c(rng), c(rng), 0.0};
        a.dims.h = b.dims.h = 1.0;
        EXPECT_NEAR(iou_bev(a, b), oracle::mc_iou(a, b, 100000, i).iou, 1e-2);
    }
}

TEST(Iou, LibraryOracleAgrees) {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> c(-1.0, 1.0);
    const auto a = make_box({0, 0, 0}, {2, 1, 1}, 0.2);
    const auto same = iou_oracle(a, a, 10000, 1);
    EXPECT_DOUBLE_EQ(same.iou, 1.0);
    EXPECT_EQ(iou_oracle(a, make_box({10, 0, 0}, {1, 1, 1}, 0), 10000, 1).iou, 0.0);
    EXPECT_THROW(iou_oracle(a, a, 100, 1), InvalidArgument);
    int outside = 0;
    for (int i = 0; i < 100; ++i) {
        auto x = random_box(rng), y = random_box(rng);
        x.center = {c(rng), c(rng), c(rng)};
        y.center = {c(rng), c(rng), c(rng)};
        const auto est = iou_oracle(x, y, 20000, i);
        if (std::abs(est.iou - iou_3d(x, y)) > 3 * est.std_error + 1e-12) ++outside;
    }
    EXPECT_LE(outside, 3);
}

TEST(Iou, CollinearEdgesAreEmpty) {
    // Touching along an edge: zero-area intersection.
    const auto a = make_box({0, 0, 0}, {1, 1, 1}, 0.0);
    const auto b = make_box({1, 0, 0}, {1, 1, 1}, 0.0);
    EXPECT_EQ(iou_bev(a, b), 0.0);
    EXPECT_EQ(iou_3d(a, b), 0.0);
}

TEST(Box, ValidityAndWrap) {
    EXPECT_FALSE((OrientedBox3{{0, 0, 0}, {0, 1, 1}, 0.0}).is_valid());
    EXPECT_FALSE((OrientedBox3{{0, 0, 0}, {1, 1, 1}, kTwoPi}).is_valid());
    EXPECT_FALSE((OrientedBox3{{NAN, 0, 0}, {1, 1, 1}, 0.0}).is_valid());
    const auto b = make_box({0, 0, 0}, {1, 1, 1}, -0.5);
    EXPECT_TRUE(b.is_valid());
    EXPECT_NEAR(b.yaw, kTwoPi - 0.5, 1e-12);
}
