#pragma once

// Minimal dense-network toolkit with hand-written backward passes. Every model
// keeps its parameters in one flat vector so that SGD, serialization and
// finite-difference checks treat all models uniformly.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include "impdet/errors.hpp"

namespace impdet::nn {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double relu(double z) { return z > 0.0 ? z : 0.0; }

// Parameter layout: weights row-major (out x in), then biases (out).
struct DenseShape {
    std::size_t in = 0;
    std::size_t out = 0;

    std::size_t size() const { return (in + 1) * out; }
};

inline void dense_forward(std::span<const double> p, DenseShape s, std::span<const double> x,
                          std::span<double> y) {
    assert(p.size() >= s.size() && x.size() == s.in && y.size() == s.out);
    const double* w = p.data();
    const double* b = p.data() + s.in * s.out;
    for (std::size_t o = 0; o < s.out; ++o) {
        double acc = b[o];
        const double* row = w + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// Accumulates parameter gradients into dp; writes input gradient into dx
// unless dx is empty.
inline void dense_backward(std::span<const double> p, DenseShape s, std::span<const double> x,
                           std::span<const double> dy, std::span<double> dp, std::span<double> dx) {
    double* dw = dp.data();
    double* db = dp.data() + s.in * s.out;
    for (std::size_t o = 0; o < s.out; ++o) {
        const double g = dy[o];
        if (g == 0.0) continue;
        db[o] += g;
        double* row = dw + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) row[i] += g * x[i];
    }
    if (dx.empty()) return;
    const double* w = p.data();
    for (std::size_t i = 0; i < s.in; ++i) dx[i] = 0.0;
    for (std::size_t o = 0; o < s.out; ++o) {
        const double g = dy[o];
        if (g == 0.0) continue;
        const double* row = w + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) dx[i] += g * row[i];
    }
}

// Fills weights with N(0, gain^2 / in) and biases with zero.
inline void init_dense(std::span<double> p, DenseShape s, std::mt19937_64& rng, double gain = 1.0) {
    std::normal_distribution<double> g(0.0, gain / std::sqrt(static_cast<double>(std::max<std::size_t>(s.in, 1))));
    for (std::size_t i = 0; i < s.in * s.out; ++i) p[i] = g(rng);
    for (std::size_t i = s.in * s.out; i < s.size(); ++i) p[i] = 0.0;
}

// Stack of dense layers, ReLU between layers, linear output.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<std::size_t> widths) : widths_(std::move(widths)) {
        if (widths_.size() < 2) throw InvalidArgument("an MLP needs at least input and output widths");
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            offsets_.push_back(n);
            n += shape(l).size();
        }
        params_.assign(n, 0.0);
    }

    std::size_t layers() const { return widths_.size() - 1; }
    std::size_t input_width() const { return widths_.front(); }
    std::size_t output_width() const { return widths_.back(); }
    const std::vector<std::size_t>& widths() const { return widths_; }
    DenseShape shape(std::size_t l) const { return {widths_[l], widths_[l + 1]}; }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }

    void init(std::uint64_t seed, double gain = 1.0) {
        std::mt19937_64 rng(seed);
        for (std::size_t l = 0; l < layers(); ++l)
            init_dense(layer_params(params_, l), shape(l), rng, l + 1 < layers() ? std::sqrt(2.0) * gain : gain);
    }

    // Activations of every layer (post-ReLU for hidden layers), input first.
    struct Trace {
        std::vector<std::vector<double>> acts;
        const std::vector<double>& output() const { return acts.back(); }
    };

    Trace forward(std::span<const double> x) const { return forward_with(params_, x); }

    Trace forward_with(std::span<const double> p, std::span<const double> x) const {
        if (x.size() != input_width()) throw ShapeMismatch("MLP input width mismatch");
        Trace t;
        t.acts.emplace_back(x.begin(), x.end());
        for (std::size_t l = 0; l < layers(); ++l) {
            std::vector<double> y(widths_[l + 1]);
            dense_forward(layer_params(p, l), shape(l), t.acts.back(), y);
            if (l + 1 < layers()) {
                for (double& v : y) v = relu(v);
            }
            t.acts.push_back(std::move(y));
        }
        return t;
    }

    // Backpropagates dL/d(output) through the trace; accumulates into grad
    // (same layout as params) and returns dL/d(input).
    std::vector<double> backward(const Trace& t, std::span<const double> dout, std::span<double> grad) const {
        return backward_with(params_, t, dout, grad);
    }

    std::vector<double> backward_with(std::span<const double> p, const Trace& t, std::span<const double> dout,
                                      std::span<double> grad) const {
        std::vector<double> dy(dout.begin(), dout.end());
        for (std::size_t l = layers(); l-- > 0;) {
            std::vector<double> dx(widths_[l]);
            dense_backward(layer_params(p, l), shape(l), t.acts[l], dy,
                           layer_params(grad, l), dx);
            if (l > 0) {
                for (std::size_t i = 0; i < dx.size(); ++i)
                    if (t.acts[l][i] <= 0.0) dx[i] = 0.0;
            }
            dy = std::move(dx);
        }
        return dy;
    }

private:
    template <typename Span>
    auto layer_params(Span&& p, std::size_t l) const -> std::span<std::remove_reference_t<decltype(p[0])>> {
        return {p.data() + offsets_[l], shape(l).size()};
    }

    std::vector<std::size_t> widths_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

}  // namespace impdet::nn
