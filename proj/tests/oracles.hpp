#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the code under test except for plain data types
// and accessors (layouts, sample points); forward passes run in long double.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "impdet/candidates.hpp"
#include "impdet/implicit.hpp"
#include "impdet/refine.hpp"
#include "impdet/train.hpp"

namespace oracle {

using ld = long double;
using impdet::OrientedBox3;
using impdet::Point3;

// ---------------------------------------------------------------------------
// Geometry

inline bool inside(const Point3& p, const OrientedBox3& b, double tol = 0.0) {
    const double dx = p.x - b.center.x, dy = p.y - b.center.y;
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double u = c * dx + s * dy, v = -s * dx + c * dy;
    return std::abs(u) <= 0.5 * b.dims.l + tol && std::abs(v) <= 0.5 * b.dims.w + tol &&
           std::abs(p.z - b.center.z) <= 0.5 * b.dims.h + tol;
}

struct McIou {
    double iou = 0.0;
    double se = 0.0;
    std::size_t either = 0;  // samples inside at least one box
};

// Uniform samples in the axis-aligned hull of both boxes; IoU = both / either.
inline McIou mc_iou(const OrientedBox3& a, const OrientedBox3& b, std::size_t n, std::uint64_t seed) {
    double lo[3] = {1e300, 1e300, 1e300}, hi[3] = {-1e300, -1e300, -1e300};
    for (const OrientedBox3* box : {&a, &b}) {
        const double c = std::cos(box->yaw), s = std::sin(box->yaw);
        const double ex = 0.5 * (std::abs(c) * box->dims.l + std::abs(s) * box->dims.w);
        const double ey = 0.5 * (std::abs(s) * box->dims.l + std::abs(c) * box->dims.w);
        lo[0] = std::min(lo[0], box->center.x - ex);
        hi[0] = std::max(hi[0], box->center.x + ex);
        lo[1] = std::min(lo[1], box->center.y - ey);
        hi[1] = std::max(hi[1], box->center.y + ey);
        lo[2] = std::min(lo[2], box->center.z - 0.5 * box->dims.h);
        hi[2] = std::max(hi[2], box->center.z + 0.5 * box->dims.h);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(lo[0], hi[0]), uy(lo[1], hi[1]), uz(lo[2], hi[2]);
    std::size_t both = 0, either = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Point3 p{ux(rng), uy(rng), uz(rng)};
        const bool ia = inside(p, a), ib = inside(p, b);
        either += (ia || ib);
        both += (ia && ib);
    }
    McIou r;
    r.either = either;
    if (either == 0) return r;
    const double p = static_cast<double>(both) / static_cast<double>(either);
    r.iou = p;
    r.se = std::sqrt(p * (1.0 - p) / static_cast<double>(either));
    return r;
}

// Axis-aligned rectangles (yaw 0 or pi): closed-form BEV IoU.
inline double aligned_iou_bev(const OrientedBox3& a, const OrientedBox3& b) {
    auto overlap = [](double c1, double e1, double c2, double e2) {
        return std::max(0.0, std::min(c1 + e1, c2 + e2) - std::max(c1 - e1, c2 - e2));
    };
    const double ix = overlap(a.center.x, 0.5 * a.dims.l, b.center.x, 0.5 * b.dims.l);
    const double iy = overlap(a.center.y, 0.5 * a.dims.w, b.center.y, 0.5 * b.dims.w);
    const double inter = ix * iy;
    return inter / (a.dims.l * a.dims.w + b.dims.l * b.dims.w - inter);
}

// Cube root of the product over axes of min(front, back) / max(front, back),
// where front/back are distances to the two faces along that axis; 0 outside.
inline double centerness(const Point3& p, const OrientedBox3& b) {
    if (!inside(p, b)) return 0.0;
    const double dx = p.x - b.center.x, dy = p.y - b.center.y;
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double u = c * dx + s * dy, v = -s * dx + c * dy, w = p.z - b.center.z;
    const double f = 0.5 * b.dims.l - u, bk = 0.5 * b.dims.l + u;
    const double l = 0.5 * b.dims.w - v, r = 0.5 * b.dims.w + v;
    const double t = 0.5 * b.dims.h - w, d = 0.5 * b.dims.h + w;
    const double prod = (std::min(f, bk) / std::max(f, bk)) * (std::min(l, r) / std::max(l, r)) *
                        (std::min(t, d) / std::max(t, d));
    return std::cbrt(prod);
}

// ---------------------------------------------------------------------------
// Loss primitives in extended precision

inline ld sigmoid(ld z) { return 1.0L / (1.0L + std::exp(-z)); }
inline ld clampp(ld p) { return std::clamp<ld>(p, 1e-7L, 1.0L - 1e-7L); }
inline ld bce(ld p, ld t) {
    const ld q = clampp(p);
    return -t * std::log(q) - (1.0L - t) * std::log(1.0L - q);
}
inline ld focal(ld p, ld t, ld alpha = 0.25L, ld gamma = 2.0L) {
    const ld q = clampp(p);
    const ld w = t > 0 ? alpha : 1.0L;
    return w * std::pow(std::abs(t - q), gamma) * bce(q, t);
}
inline ld smooth_l1(ld pred, ld target) {
    const ld d = pred - target;
    return std::abs(d) < 1.0L ? 0.5L * d * d : std::abs(d) - 0.5L;
}

// Dense stack: per layer W (out x in, row-major) then b (out); ReLU between
// layers, linear output.
inline std::vector<ld> mlp(std::span<const double> p, const std::vector<std::size_t>& widths,
                           const std::vector<ld>& x) {
    std::vector<ld> a = x;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t in = widths[l], out = widths[l + 1];
        std::vector<ld> y(out);
        for (std::size_t o = 0; o < out; ++o) {
            ld z = p[off + in * out + o];
            for (std::size_t i = 0; i < in; ++i) z += static_cast<ld>(p[off + o * in + i]) * a[i];
            y[o] = (l + 2 < widths.size()) ? std::max<ld>(z, 0) : z;
        }
        off += (in + 1) * out;
        a = std::move(y);
    }
    return a;
}

inline std::size_t mlp_size(const std::vector<std::size_t>& widths) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += (widths[l] + 1) * widths[l + 1];
    return n;
}

inline std::vector<ld> widen(std::span<const double> v) { return {v.begin(), v.end()}; }

// ---------------------------------------------------------------------------
// Model losses

inline ld shifter_loss(std::span<const double> p, std::size_t feature_width, std::size_t hidden,
                       std::span<const impdet::ShifterExample> batch) {
    ld s = 0;
    for (const auto& e : batch) {
        const auto y = mlp(p, {feature_width, hidden, 3}, widen(e.feature));
        s += smooth_l1(y[0], e.target_offset.x) + smooth_l1(y[1], e.target_offset.y) +
             smooth_l1(y[2], e.target_offset.z);
    }
    return s / static_cast<ld>(batch.size());
}

inline ld centerness_loss(std::span<const double> p, std::size_t feature_width,
                          std::span<const impdet::CenternessExample> batch, std::size_t positives) {
    ld s = 0;
    for (const auto& e : batch) s += focal(sigmoid(mlp(p, {feature_width, 1}, widen(e.feature))[0]), e.target);
    return s / static_cast<ld>(positives);
}

// Conditioned classifier: tanh(affine(candidate)) gives the point kernels
// W1 (16 x (F+3)), b1, w2, b2; value = sigmoid(w2 . relu(W1 u + b1) + b2).
inline ld implicit_loss(std::span<const double> P, const impdet::KernelGenerator& g,
                        std::span<const impdet::ImplicitExample> ex) {
    const std::size_t F = g.feature_width(), in = F + 3, C = impdet::kKernelChannels;
    const std::size_t T = impdet::kernel_param_count(F);
    ld total = 0;
    for (const auto& e : ex) {
        const auto x = g.condition_input(e.sample.candidate);
        std::vector<ld> th(T);
        for (std::size_t o = 0; o < T; ++o) {
            ld z = P[in * T + o];
            for (std::size_t i = 0; i < in; ++i) z += static_cast<ld>(P[o * in + i]) * x[i];
            th[o] = std::tanh(z);
        }
        ld s = 0;
        for (std::size_t k = 0; k < e.sample.size(); ++k) {
            std::vector<ld> u = widen(e.sample.feature(k));
            const Point3 d = e.sample.point(k) - e.sample.candidate.position;
            u.push_back(d.x);
            u.push_back(d.y);
            u.push_back(d.z);
            ld z2 = th[in * C + C + C];
            for (std::size_t c = 0; c < C; ++c) {
                ld a = th[in * C + c];
                for (std::size_t i = 0; i < in; ++i) a += th[c * in + i] * u[i];
                z2 += th[in * C + C + c] * std::max<ld>(a, 0);
            }
            s += bce(sigmoid(z2), e.targets[k]);
        }
        total += s / static_cast<ld>(e.sample.size());
    }
    return total / static_cast<ld>(ex.size());
}

// Refine head: trunk {in, w, w} + ReLU, branches {w, w, 1 | 7 | 1}; params
// concatenated trunk, cls, box, dir.
inline ld refine_loss(std::span<const double> P, std::size_t in, std::size_t w,
                      std::span<const impdet::RefineExample> batch, const impdet::LossWeights& lw) {
    const std::vector<std::size_t> trunk{in, w, w}, cls{w, w, 1}, box{w, w, impdet::kBoxDeltaWidth}, dir{w, w, 1};
    const std::size_t o1 = mlp_size(trunk), o2 = o1 + mlp_size(cls), o3 = o2 + mlp_size(box);
    std::size_t positives = 0;
    for (const auto& e : batch) positives += e.class_target > 0 ? 1 : 0;
    if (positives == 0) return 0;
    ld lc = 0, lb = 0, ldir = 0;
    for (const auto& e : batch) {
        auto h = mlp(P, trunk, widen(e.descriptor));
        for (ld& v : h) v = std::max<ld>(v, 0);
        const ld conf = sigmoid(mlp(P.subspan(o1), cls, h)[0]);
        lc += focal(conf, e.class_target);
        if (e.class_target > 0) {
            const auto d = mlp(P.subspan(o2), box, h);
            for (std::size_t c = 0; c < impdet::kBoxDeltaWidth; ++c) lb += smooth_l1(d[c], e.box_target[c]);
            ldir += bce(sigmoid(mlp(P.subspan(o3), dir, h)[0]), e.direction);
        }
    }
    const ld inv = 1.0L / static_cast<ld>(positives);
    return lw.cls * lc * inv + lw.box * lb * inv + lw.direction * ldir * inv;
}

// Loss function for impdet::grad_check: analytic gradient from the library,
// loss values from the extended-precision oracle (offset by its value at the
// starting point so the difference quotient keeps full precision).
template <typename Oracle, typename Analytic>
impdet::LossFunction mixed_loss(Oracle oracle_fn, Analytic analytic_fn, std::span<const double> p0) {
    const ld base = oracle_fn(p0);
    return [=](std::span<const double> p, std::span<double> grad) -> double {
        if (!grad.empty()) return analytic_fn(p, grad);
        return static_cast<double>(oracle_fn(p) - base);
    };
}

}  // namespace oracle
