#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "w1fe/autodiff/backward.hpp"
#include "w1fe/autodiff/graph.hpp"
#include "w1fe/error.hpp"
#include "w1fe/nn/mlp.hpp"

namespace w1fe::ad {

enum class PenaltyVariant : std::uint8_t { gp, lp };
enum class PenaltyBackend : std::uint8_t { exact, finite_diff };

inline std::string to_string(PenaltyVariant v) { return v == PenaltyVariant::gp ? "gp" : "lp"; }

namespace detail {

inline void require_scalar_output(const nn::Params& net)
{
    if (net.spec().output_width() != 1)
        throw ShapeError("input gradient: network output width is " + std::to_string(net.spec().output_width()) +
                         ", expected a scalar potential");
}

} // namespace detail

/// Row-wise input gradients of a scalar-output network: row i of the result is
/// the gradient of net(x_i) with respect to x_i.
inline Tensor input_gradients(const nn::Params& net, const Tensor& x)
{
    detail::require_scalar_output(net);
    Graph graph;
    const NodeId in = graph.input(x);
    const auto nodes = nn::build_forward(graph, net, in, false);
    const NodeId total = graph.sum(nodes.output);
    const std::array<NodeId, 1> wrt{in};
    return backward(graph, total, wrt).at(in);
}

/// Gradient at a single point given as a length-d vector (or 1 x d matrix).
inline Tensor input_gradient(const nn::Params& net, const Tensor& x)
{
    const Tensor row(Shape{1, x.size()}, x.storage());
    Tensor g = input_gradients(net, row);
    return Tensor(x.shape(), std::move(g.storage()));
}

struct PenaltyNodes {
    NodeId penalty;   // lambda * mean(h(|grad| - 1)^2)
    NodeId norms;     // per-row |grad phi(x_hat)|
    std::size_t degenerate = 0; // rows with a zero input gradient
};

/// Adds the gradient-penalty (gp) or Lipschitz-penalty (lp) term for the
/// interpolates held in `x_hat` to `graph`. The input gradient is built as
/// graph nodes, so differentiating `penalty` w.r.t. the weight leaves is a
/// second-order derivative of the network.
inline PenaltyNodes add_penalty(Graph& graph, const nn::MlpSpec& spec, const nn::NetLeaves& leaves, NodeId x_hat,
                                PenaltyVariant variant, double lambda)
{
    const NodeId out = nn::apply_network(graph, spec, leaves, x_hat);
    const NodeId total = graph.sum(out);
    const std::array<NodeId, 1> wrt{x_hat};
    const NodeId grad_x = gradient_node(backward_nodes(graph, total, wrt), x_hat);
    const NodeId norms = graph.row_norm(grad_x);
    const std::size_t n = graph.value(norms).size();
    const NodeId ones = graph.constant(Tensor(Shape{n}, 1.0));
    NodeId excess = graph.subtract(norms, ones);
    if (variant == PenaltyVariant::lp) excess = graph.leaky_relu(excess, 0.0);
    const NodeId pen = graph.scale(graph.mean(graph.square(excess)), lambda);
    std::size_t degenerate = 0;
    for (double v : graph.value(norms).values())
        if (v == 0.0) ++degenerate;
    return {pen, norms, degenerate};
}

inline double penalty_value(const nn::Params& net, const Tensor& x_hat, PenaltyVariant variant, double lambda = 1.0)
{
    detail::require_scalar_output(net);
    const Tensor g = input_gradients(net, x_hat);
    double acc = 0.0;
    for (std::size_t r = 0; r < g.rows(); ++r) {
        double sq = 0.0;
        for (double v : g.row(r)) sq += v * v;
        double excess = std::sqrt(sq) - 1.0;
        if (variant == PenaltyVariant::lp && excess < 0.0) excess = 0.0;
        acc += excess * excess;
    }
    return lambda * acc / static_cast<double>(g.rows());
}

struct PenaltyGradient {
    double value = 0.0;
    std::vector<double> grad; // flat, in parameter order
    std::size_t degenerate = 0;
};

/// Parameter gradient of the penalty. `exact` differentiates through the
/// input-gradient computation; `finite_diff` uses central differences of
/// penalty_value over every parameter (step `h`).
inline PenaltyGradient penalty_gradient(const nn::Params& net, const Tensor& x_hat, PenaltyVariant variant,
                                        PenaltyBackend backend, double lambda = 1.0, double h = 1e-5)
{
    detail::require_scalar_output(net);
    PenaltyGradient result;
    if (backend == PenaltyBackend::exact) {
        Graph graph;
        const auto leaves = nn::add_parameters(graph, net, true);
        const NodeId x = graph.input(x_hat);
        const auto pen = add_penalty(graph, net.spec(), leaves, x, variant, lambda);
        const auto wrt = leaves.parameter_leaves();
        result.value = graph.value(pen.penalty).item();
        result.grad = nn::flatten_gradient(net, leaves, backward(graph, pen.penalty, wrt));
        result.degenerate = pen.degenerate;
        return result;
    }
    result.value = penalty_value(net, x_hat, variant, lambda);
    result.grad.resize(net.size());
    nn::Params probe = net;
    for (std::size_t i = 0; i < net.size(); ++i) {
        const double orig = probe.values()[i];
        probe.values()[i] = orig + h;
        const double up = penalty_value(probe, x_hat, variant, lambda);
        probe.values()[i] = orig - h;
        const double down = penalty_value(probe, x_hat, variant, lambda);
        probe.values()[i] = orig;
        result.grad[i] = (up - down) / (2.0 * h);
    }
    const Tensor g = input_gradients(net, x_hat);
    for (std::size_t r = 0; r < g.rows(); ++r) {
        bool zero = true;
        for (double v : g.row(r)) zero = zero && v == 0.0;
        if (zero) ++result.degenerate;
    }
    return result;
}

} // namespace w1fe::ad
