#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "w1fe/autodiff/graph.hpp"

namespace w1fe::ad {

/// Gradient values keyed by leaf id, ordered by id.
class GradientMap {
public:
    void insert(NodeId leaf, Tensor grad) { entries_.emplace_back(leaf, std::move(grad)); }

    bool contains(NodeId leaf) const { return find(leaf) != nullptr; }

    const Tensor& at(NodeId leaf) const
    {
        const Tensor* t = find(leaf);
        if (!t) throw Error("gradient map: leaf " + std::to_string(leaf.index) + " has no entry");
        return *t;
    }

    std::size_t size() const noexcept { return entries_.size(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    friend bool operator==(const GradientMap&, const GradientMap&) = default;

private:
    const Tensor* find(NodeId leaf) const
    {
        for (const auto& [id, t] : entries_)
            if (id == leaf) return &t;
        return nullptr;
    }

    std::vector<std::pair<NodeId, Tensor>> entries_;
};

/// Gradient nodes appended to the graph, keyed by leaf id. Because they are
/// ordinary nodes they can be differentiated again.
using GradientNodes = std::vector<std::pair<NodeId, NodeId>>;

inline NodeId gradient_node(const GradientNodes& grads, NodeId leaf)
{
    for (const auto& [id, g] : grads)
        if (id == leaf) return g;
    throw Error("gradient nodes: leaf " + std::to_string(leaf.index) + " has no entry");
}

namespace detail {

// Vector-Jacobian product of node `self` with respect to its `slot`-th input,
// given the incoming gradient node `g`. Returns nullopt for structurally zero
// contributions. Everything is built from graph ops, so the result stays
// differentiable.
inline std::optional<NodeId> vjp(Graph& graph, NodeId self, const OpSpec& s,
                                 const std::array<NodeId, 2>& inputs, int slot, NodeId g)
{
    const NodeId a = inputs[0];
    const NodeId b = inputs[1];
    switch (s.op) {
    case Op::leaf: return std::nullopt;
    case Op::matmul: {
        const bool ta = s.transpose_a, tb = s.transpose_b;
        if (slot == 0) {
            if (!ta) return graph.matmul(g, b, false, !tb);
            return graph.matmul(b, g, tb, true);
        }
        if (!tb) return graph.matmul(a, g, !ta, false);
        return graph.matmul(g, a, true, ta);
    }
    case Op::add_bias: return slot == 0 ? g : graph.sum_rows(g);
    case Op::leaky_relu: return graph.leaky_relu_grad(a, g, s.scalar);
    case Op::tanh: return graph.tanh_grad(self, g);
    case Op::square: return graph.scale(graph.mul(a, g), 2.0);
    case Op::subtract: return slot == 0 ? g : graph.scale(g, -1.0);
    case Op::add: return g;
    case Op::mul: return graph.mul(g, slot == 0 ? b : a);
    case Op::scale: return graph.scale(g, s.scalar);
    case Op::sum: return graph.expand(g, graph.value(a).shape());
    case Op::mean: {
        const double n = static_cast<double>(graph.value(a).size());
        return graph.scale(graph.expand(g, graph.value(a).shape()), 1.0 / n);
    }
    case Op::norm2: {
        // d|x| = x/|x|, defined as 0 at the origin.
        const NodeId ratio = graph.safe_div(g, self);
        return graph.mul(a, graph.expand(ratio, graph.value(a).shape()));
    }
    case Op::row_norm: return graph.row_scale(a, graph.safe_div(g, self));
    case Op::sum_rows: return graph.broadcast_rows(g, graph.value(a).rows());
    case Op::broadcast_rows: return graph.sum_rows(g);
    case Op::row_sum: return graph.broadcast_cols(g, graph.value(a).cols());
    case Op::broadcast_cols: return graph.row_sum(g);
    case Op::row_scale:
        if (slot == 0) return graph.row_scale(g, b);
        return graph.row_sum(graph.mul(g, a));
    case Op::expand: {
        const NodeId total = graph.sum(g);
        const Shape& in_shape = graph.value(a).shape();
        if (in_shape.empty()) return total;
        return graph.reshape(total, in_shape);
    }
    case Op::reshape: return graph.reshape(g, graph.value(a).shape());
    case Op::leaky_relu_grad:
        // The slope mask is piecewise constant in x.
        if (slot == 0) return std::nullopt;
        return graph.leaky_relu_grad(a, g, s.scalar);
    case Op::tanh_grad:
        if (slot == 1) return graph.tanh_grad(a, g);
        return graph.scale(graph.mul(graph.mul(a, b), g), -2.0);
    case Op::safe_div:
        if (slot == 0) return graph.safe_div(g, b);
        return graph.scale(graph.safe_div(graph.mul(self, g), b), -1.0);
    }
    return std::nullopt;
}

} // namespace detail

/// Reverse sweep from a scalar `output`, appending gradient nodes to the graph.
/// `wrt` lists the leaves of interest; empty means every parameter and input
/// leaf that precedes `output`. Only paths reaching a requested leaf are swept.
inline GradientNodes backward_nodes(Graph& graph, NodeId output, std::span<const NodeId> wrt = {})
{
    const Tensor& out_value = graph.value(output);
    if (out_value.size() != 1)
        throw ShapeError("backward: output must be scalar, got shape " + to_string(out_value.shape()));

    const std::size_t n = output.index + 1;
    std::vector<NodeId> targets;
    if (wrt.empty()) {
        for (std::uint32_t i = 0; i < n; ++i)
            if (graph.is_marked_leaf(NodeId{i})) targets.push_back(NodeId{i});
    } else {
        targets.assign(wrt.begin(), wrt.end());
    }

    std::vector<char> relevant(n, 0);
    for (NodeId t : targets)
        if (t.index < n) relevant[t.index] = 1;
    for (std::uint32_t i = 0; i < n; ++i) {
        const Node& node = graph.node(NodeId{i});
        const int arity = op_arity(node.spec.op);
        for (int k = 0; k < arity; ++k)
            if (relevant[node.inputs[k].index]) relevant[i] = 1;
    }

    std::vector<std::optional<NodeId>> grad(n);
    grad[output.index] = graph.constant(Tensor(out_value.shape(), 1.0));

    for (std::uint32_t i = output.index + 1; i-- > 0;) {
        if (!grad[i] || !relevant[i]) continue;
        // Copies: appending nodes may reallocate the node storage.
        const OpSpec spec = graph.node(NodeId{i}).spec;
        const std::array<NodeId, 2> inputs = graph.node(NodeId{i}).inputs;
        const int arity = op_arity(spec.op);
        for (int k = 0; k < arity; ++k) {
            const NodeId in = inputs[k];
            if (!relevant[in.index]) continue;
            const auto contribution = detail::vjp(graph, NodeId{i}, spec, inputs, k, *grad[i]);
            if (!contribution) continue;
            grad[in.index] = grad[in.index] ? graph.add(*grad[in.index], *contribution) : *contribution;
        }
    }

    GradientNodes result;
    for (NodeId t : targets) {
        if (t.index < n && grad[t.index]) {
            result.emplace_back(t, *grad[t.index]);
        } else {
            result.emplace_back(t, graph.constant(Tensor(graph.value(t).shape(), 0.0)));
        }
    }
    return result;
}

inline GradientMap backward(Graph& graph, NodeId output, std::span<const NodeId> wrt = {})
{
    GradientMap map;
    for (const auto& [leaf, g] : backward_nodes(graph, output, wrt)) map.insert(leaf, graph.value(g));
    return map;
}

} // namespace w1fe::ad
