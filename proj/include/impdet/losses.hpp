#pragma once

// Scalar loss terms and their derivatives with respect to the prediction.

#include <algorithm>
#include <cmath>
#include <span>

namespace impdet {

inline constexpr double kProbEpsilon = 1e-7;

struct FocalParams {
    double alpha = 0.25;
    double gamma = 2.0;
};

inline double smooth_l1(double pred, double target) {
    const double d = pred - target;
    return std::abs(d) < 1.0 ? 0.5 * d * d : std::abs(d) - 0.5;
}

inline double smooth_l1_grad(double pred, double target) {
    const double d = pred - target;
    if (std::abs(d) < 1.0) return d;
    return d > 0.0 ? 1.0 : -1.0;
}

// Component-wise sum.
inline double smooth_l1(std::span<const double> pred, std::span<const double> target) {
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += smooth_l1(pred[i], target[i]);
    return s;
}

inline double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

inline double bce(double p, double target) {
    const double q = clamp_prob(p);
    return -target * std::log(q) - (1.0 - target) * std::log(1.0 - q);
}

// d bce / d p; zero where the clamp is active.
inline double bce_grad(double p, double target) {
    if (p <= kProbEpsilon || p >= 1.0 - kProbEpsilon) return 0.0;
    return -target / p + (1.0 - target) / (1.0 - p);
}

// Quality-focal form for soft targets: |t - p|^gamma * bce(p, t). Alpha
// weights targets > 0; zero targets carry weight 1.
inline double focal_loss(double p, double target, FocalParams fp = {}) {
    const double q = clamp_prob(p);
    const double w = target > 0.0 ? fp.alpha : 1.0;
    const double mod = fp.gamma == 0.0 ? 1.0 : std::pow(std::abs(target - q), fp.gamma);
    return w * mod * bce(q, target);
}

inline double focal_loss_grad(double p, double target, FocalParams fp = {}) {
    if (p <= kProbEpsilon || p >= 1.0 - kProbEpsilon) return 0.0;
    const double w = target > 0.0 ? fp.alpha : 1.0;
    const double diff = p - target;
    const double ad = std::abs(diff);
    const double mod = fp.gamma == 0.0 ? 1.0 : std::pow(ad, fp.gamma);
    double dmod = 0.0;
    if (fp.gamma != 0.0 && ad > 0.0) dmod = fp.gamma * std::pow(ad, fp.gamma - 1.0) * (diff > 0.0 ? 1.0 : -1.0);
    return w * (dmod * bce(p, target) + mod * bce_grad(p, target));
}

}  // namespace impdet
