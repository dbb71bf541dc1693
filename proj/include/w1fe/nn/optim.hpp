#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "w1fe/error.hpp"
#include "w1fe/nn/mlp.hpp"

namespace w1fe::nn {

enum class OptimizerKind : std::uint8_t { sgd, adam };

inline OptimizerKind parse_optimizer(const std::string& s)
{
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw ConfigError("unknown optimizer '" + s + "' (expected sgd|adam)");
}

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    AdamState(std::size_t n, double learning_rate) : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

inline void check_gradient(const Params& params, std::span<const double> grads)
{
    if (grads.size() != params.size())
        throw ShapeError("optimizer: gradient length " + std::to_string(grads.size()) + " != parameter count " +
                         std::to_string(params.size()));
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw NonFiniteError("optimizer: non-finite gradient in layer " + std::to_string(params.layer_of(i)) +
                                 " (flat index " + std::to_string(i) + ")");
}

/// Adam with bias correction.
inline void adam_step(AdamState& state, Params& params, std::span<const double> grads)
{
    check_gradient(params, grads);
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw ShapeError("adam: state length does not match parameter count");
    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    auto& theta = params.values();
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        theta[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

inline void sgd_step(Params& params, std::span<const double> grads, double lr)
{
    check_gradient(params, grads);
    auto& theta = params.values();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grads[i];
}

/// A parameter vector together with the optimiser that moves it.
struct Trainable {
    Params params;
    OptimizerKind kind = OptimizerKind::adam;
    AdamState adam;
    double lr = 1e-4;

    Trainable() = default;
    Trainable(Params p, OptimizerKind k, double learning_rate)
        : params(std::move(p)), kind(k), adam(params.size(), learning_rate), lr(learning_rate) {}

    void step(std::span<const double> grads)
    {
        if (kind == OptimizerKind::adam) adam_step(adam, params, grads);
        else sgd_step(params, grads, lr);
    }
};

} // namespace w1fe::nn
