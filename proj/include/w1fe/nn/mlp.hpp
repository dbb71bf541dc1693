#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "w1fe/autodiff/backward.hpp"
#include "w1fe/autodiff/graph.hpp"
#include "w1fe/autodiff/tensor.hpp"
#include "w1fe/error.hpp"

namespace w1fe::nn {

enum class Activation : std::uint8_t { leaky_relu = 0, tanh = 1 };

inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "leaky_relu"; }

inline Activation parse_activation(const std::string& s)
{
    if (s == "leaky_relu") return Activation::leaky_relu;
    if (s == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + s + "' (expected leaky_relu|tanh)");
}

/// Architecture of a fully connected network. The output layer is always
/// linear; hidden layers share one activation.
struct MlpSpec {
    std::vector<std::size_t> widths; // input, hidden..., output
    Activation hidden = Activation::leaky_relu;
    double leaky_alpha = 0.2;

    std::size_t layers() const noexcept { return widths.empty() ? 0 : widths.size() - 1; }
    std::size_t input_width() const { return widths.front(); }
    std::size_t output_width() const { return widths.back(); }

    void validate() const
    {
        if (widths.size() < 2) throw ConfigError("mlp: need at least input and output widths");
        for (std::size_t w : widths)
            if (w == 0) throw ConfigError("mlp: widths must be positive");
    }

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// `hidden_layers` hidden layers of `hidden_width` units between `in` and `out`.
inline MlpSpec make_mlp(std::size_t in, std::size_t hidden_width, std::size_t hidden_layers, std::size_t out,
                        Activation act = Activation::leaky_relu, double alpha = 0.2)
{
    MlpSpec spec;
    spec.widths.push_back(in);
    for (std::size_t i = 0; i < hidden_layers; ++i) spec.widths.push_back(hidden_width);
    spec.widths.push_back(out);
    spec.hidden = act;
    spec.leaky_alpha = alpha;
    spec.validate();
    return spec;
}

struct LayerSlot {
    std::size_t weight_offset; // row-major fan_in x fan_out
    std::size_t bias_offset;
    std::size_t fan_in;
    std::size_t fan_out;
};

inline std::vector<LayerSlot> layout_of(const MlpSpec& spec)
{
    spec.validate();
    std::vector<LayerSlot> slots;
    std::size_t off = 0;
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
        slots.push_back({off, off + in * out, in, out});
        off += in * out + out;
    }
    return slots;
}

inline std::size_t parameter_count(const MlpSpec& spec)
{
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l)
        n += spec.widths[l] * spec.widths[l + 1] + spec.widths[l + 1];
    return n;
}

/// Flat parameter vector plus the layout that interprets it.
class Params {
public:
    Params() = default;

    explicit Params(MlpSpec spec)
        : spec_(std::move(spec)), layout_(layout_of(spec_)), values_(parameter_count(spec_), 0.0) {}

    Params(MlpSpec spec, std::vector<double> values) : Params(std::move(spec))
    {
        if (values.size() != values_.size())
            throw ShapeError("params: expected " + std::to_string(values_.size()) + " values, got " +
                             std::to_string(values.size()));
        values_ = std::move(values);
    }

    const MlpSpec& spec() const noexcept { return spec_; }
    const std::vector<LayerSlot>& layout() const noexcept { return layout_; }
    std::size_t size() const noexcept { return values_.size(); }
    std::vector<double>& values() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    std::span<double> weights(std::size_t layer)
    {
        const auto& s = layout_.at(layer);
        return {values_.data() + s.weight_offset, s.fan_in * s.fan_out};
    }
    std::span<const double> weights(std::size_t layer) const
    {
        const auto& s = layout_.at(layer);
        return {values_.data() + s.weight_offset, s.fan_in * s.fan_out};
    }
    std::span<double> bias(std::size_t layer)
    {
        const auto& s = layout_.at(layer);
        return {values_.data() + s.bias_offset, s.fan_out};
    }
    std::span<const double> bias(std::size_t layer) const
    {
        const auto& s = layout_.at(layer);
        return {values_.data() + s.bias_offset, s.fan_out};
    }

    // Layer owning flat index i, for error messages.
    std::size_t layer_of(std::size_t i) const
    {
        for (std::size_t l = 0; l < layout_.size(); ++l)
            if (i < layout_[l].bias_offset + layout_[l].fan_out) return l;
        return layout_.size();
    }

    friend bool operator==(const Params& a, const Params& b)
    {
        return a.spec_ == b.spec_ && a.values_ == b.values_;
    }

private:
    MlpSpec spec_;
    std::vector<LayerSlot> layout_;
    std::vector<double> values_;
};

/// He initialisation for leaky_relu (N(0, 2/fan_in)), Xavier for tanh
/// (N(0, 2/(fan_in+fan_out))); zero biases.
inline Params init(const MlpSpec& spec, std::uint64_t seed)
{
    Params p(spec);
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        const auto& s = p.layout()[l];
        const double var = spec.hidden == Activation::tanh
                               ? 2.0 / static_cast<double>(s.fan_in + s.fan_out)
                               : 2.0 / static_cast<double>(s.fan_in);
        std::normal_distribution<double> dist(0.0, std::sqrt(var));
        for (double& w : p.weights(l)) w = dist(rng);
    }
    return p;
}

/// Weight and bias leaves of a network on a graph.
struct NetLeaves {
    std::vector<ad::NodeId> weights;
    std::vector<ad::NodeId> biases;

    std::vector<ad::NodeId> parameter_leaves() const
    {
        std::vector<ad::NodeId> out;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            out.push_back(weights[l]);
            out.push_back(biases[l]);
        }
        return out;
    }
};

struct NetNodes : NetLeaves {
    ad::NodeId output;
};

/// Adds the network's weights to `graph`: parameter leaves when `trainable`,
/// constants otherwise.
inline NetLeaves add_parameters(ad::Graph& graph, const Params& params, bool trainable = true)
{
    NetLeaves leaves;
    for (std::size_t l = 0; l < params.spec().layers(); ++l) {
        const auto& s = params.layout()[l];
        const auto w = params.weights(l);
        const auto b = params.bias(l);
        Tensor wt(Shape{s.fan_in, s.fan_out}, std::vector<double>(w.begin(), w.end()));
        Tensor bt(Shape{s.fan_out}, std::vector<double>(b.begin(), b.end()));
        leaves.weights.push_back(trainable ? graph.parameter(std::move(wt)) : graph.constant(std::move(wt)));
        leaves.biases.push_back(trainable ? graph.parameter(std::move(bt)) : graph.constant(std::move(bt)));
    }
    return leaves;
}

/// Applies the network to `input` (an n x fan_in node) using existing leaves.
inline ad::NodeId apply_network(ad::Graph& graph, const MlpSpec& spec, const NetLeaves& leaves, ad::NodeId input)
{
    const Tensor& x = graph.value(input);
    if (x.rank() != 2 || x.cols() != spec.input_width())
        throw ShapeError("forward: input shape " + w1fe::to_string(x.shape()) + " does not match input width " +
                         std::to_string(spec.input_width()));
    ad::NodeId h = input;
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        h = graph.add_bias(graph.matmul(h, leaves.weights[l]), leaves.biases[l]);
        if (l + 1 < spec.layers())
            h = spec.hidden == Activation::tanh ? graph.tanh(h) : graph.leaky_relu(h, spec.leaky_alpha);
    }
    return h;
}

inline NetNodes build_forward(ad::Graph& graph, const Params& params, ad::NodeId input, bool trainable = true)
{
    NetNodes nodes;
    static_cast<NetLeaves&>(nodes) = add_parameters(graph, params, trainable);
    nodes.output = apply_network(graph, params.spec(), nodes, input);
    return nodes;
}

/// Gathers per-leaf gradients back into the flat parameter order.
inline std::vector<double> flatten_gradient(const Params& params, const NetLeaves& nodes,
                                            const ad::GradientMap& grads)
{
    std::vector<double> flat(params.size(), 0.0);
    for (std::size_t l = 0; l < nodes.weights.size(); ++l) {
        const auto& s = params.layout()[l];
        const auto& gw = grads.at(nodes.weights[l]);
        const auto& gb = grads.at(nodes.biases[l]);
        std::copy(gw.storage().begin(), gw.storage().end(), flat.begin() + static_cast<long>(s.weight_offset));
        std::copy(gb.storage().begin(), gb.storage().end(), flat.begin() + static_cast<long>(s.bias_offset));
    }
    return flat;
}

/// Batched forward pass without a graph: rows of `x` are samples.
inline Tensor forward(const Params& params, const Tensor& x)
{
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const MlpSpec& spec = params.spec();
    if (x.rank() != 2 || x.cols() != spec.input_width())
        throw ShapeError("forward: input shape " + w1fe::to_string(x.shape()) + " does not match input width " +
                         std::to_string(spec.input_width()));
    RowMatrix h = Eigen::Map<const RowMatrix>(x.data(), static_cast<long>(x.rows()), static_cast<long>(x.cols()));
    for (std::size_t l = 0; l < spec.layers(); ++l) {
        const auto& s = params.layout()[l];
        Eigen::Map<const RowMatrix> w(params.values().data() + s.weight_offset, static_cast<long>(s.fan_in),
                                      static_cast<long>(s.fan_out));
        Eigen::Map<const Eigen::RowVectorXd> b(params.values().data() + s.bias_offset, static_cast<long>(s.fan_out));
        RowMatrix next = h * w;
        next.rowwise() += b;
        if (l + 1 < spec.layers()) {
            if (spec.hidden == Activation::tanh) {
                next = next.array().tanh().matrix();
            } else {
                const double a = spec.leaky_alpha;
                next = next.unaryExpr([a](double v) { return v > 0.0 ? v : a * v; });
            }
        }
        h = std::move(next);
    }
    Tensor out(Shape{x.rows(), spec.output_width()});
    Eigen::Map<RowMatrix>(out.data(), static_cast<long>(out.rows()), static_cast<long>(out.cols())) = h;
    if (!out.all_finite()) throw NonFiniteError("forward: non-finite network output");
    return out;
}

} // namespace w1fe::nn
