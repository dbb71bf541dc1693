#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "w1fe/autodiff/tensor.hpp"
#include "w1fe/error.hpp"

namespace w1fe::ad {

struct NodeId {
    std::uint32_t index = 0;
    friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

enum class LeafKind : std::uint8_t { none, parameter, input, constant };

// The first block is the user-facing op set; the second block exists so that
// every vector-Jacobian product is itself expressible as graph nodes, which is
// what makes second-order differentiation (penalties on input gradients) work.
enum class Op : std::uint8_t {
    leaf,
    matmul,
    add_bias,
    leaky_relu,
    tanh,
    square,
    subtract,
    scale,
    sum,
    mean,
    norm2,
    add,
    mul,
    row_norm,

    sum_rows,
    broadcast_rows,
    row_sum,
    broadcast_cols,
    row_scale,
    expand,
    reshape,
    leaky_relu_grad,
    tanh_grad,
    safe_div,
};

inline std::string_view op_name(Op op)
{
    switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add_bias: return "add_bias";
    case Op::leaky_relu: return "leaky_relu";
    case Op::tanh: return "tanh";
    case Op::square: return "square";
    case Op::subtract: return "subtract";
    case Op::scale: return "scale";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::norm2: return "norm2";
    case Op::add: return "add";
    case Op::mul: return "mul";
    case Op::row_norm: return "row_norm";
    case Op::sum_rows: return "sum_rows";
    case Op::broadcast_rows: return "broadcast_rows";
    case Op::row_sum: return "row_sum";
    case Op::broadcast_cols: return "broadcast_cols";
    case Op::row_scale: return "row_scale";
    case Op::expand: return "expand";
    case Op::reshape: return "reshape";
    case Op::leaky_relu_grad: return "leaky_relu_grad";
    case Op::tanh_grad: return "tanh_grad";
    case Op::safe_div: return "safe_div";
    }
    return "?";
}

inline int op_arity(Op op)
{
    switch (op) {
    case Op::leaf: return 0;
    case Op::matmul:
    case Op::add_bias:
    case Op::subtract:
    case Op::add:
    case Op::mul:
    case Op::row_scale:
    case Op::leaky_relu_grad:
    case Op::tanh_grad:
    case Op::safe_div: return 2;
    default: return 1;
    }
}

/// Op tag plus its static attributes.
///   scalar: slope for leaky_relu / leaky_relu_grad, factor for scale
///   count:  row count for broadcast_rows, column count for broadcast_cols
///   shape:  target shape for expand / reshape
///   transpose_a/b: operand transposition for matmul
struct OpSpec {
    Op op = Op::leaf;
    double scalar = 0.0;
    std::size_t count = 0;
    Shape shape{};
    bool transpose_a = false;
    bool transpose_b = false;
};

struct Node {
    OpSpec spec;
    std::array<NodeId, 2> inputs{};
    LeafKind leaf = LeafKind::none;
    Tensor value;
};

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

[[noreturn]] inline void shape_fail(const OpSpec& spec, const Tensor& a, const Tensor* b,
                                    std::string_view why)
{
    std::string msg = std::string(op_name(spec.op)) + ": " + std::string(why) + " (shapes " +
                      to_string(a.shape());
    if (b) msg += ", " + to_string(b->shape());
    msg += ")";
    throw ShapeError(msg);
}

inline Tensor matmul(const OpSpec& s, const Tensor& a, const Tensor& b)
{
    if (a.rank() != 2 || b.rank() != 2) shape_fail(s, a, &b, "operands must be matrices");
    const std::size_t ar = s.transpose_a ? a.cols() : a.rows();
    const std::size_t ac = s.transpose_a ? a.rows() : a.cols();
    const std::size_t br = s.transpose_b ? b.cols() : b.rows();
    const std::size_t bc = s.transpose_b ? b.rows() : b.cols();
    if (ac != br) shape_fail(s, a, &b, "inner dimensions differ");
    Tensor out(Shape{ar, bc});
    ConstMap A(a.data(), a.rows(), a.cols());
    ConstMap B(b.data(), b.rows(), b.cols());
    MutMap C(out.data(), ar, bc);
    if (!s.transpose_a && !s.transpose_b) C.noalias() = A * B;
    else if (s.transpose_a && !s.transpose_b) C.noalias() = A.transpose() * B;
    else if (!s.transpose_a && s.transpose_b) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
    return out;
}

template <class F>
Tensor unary_map(const Tensor& x, F f)
{
    Tensor out(x.shape());
    const std::size_t n = x.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i]);
    return out;
}

template <class F>
Tensor binary_map(const OpSpec& s, const Tensor& a, const Tensor& b, F f)
{
    if (a.shape() != b.shape()) shape_fail(s, a, &b, "operands must have equal shapes");
    Tensor out(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
    return out;
}

inline void require_matrix(const OpSpec& s, const Tensor& x)
{
    if (x.rank() != 2) shape_fail(s, x, nullptr, "operand must be a matrix");
}

inline void require_vector(const OpSpec& s, const Tensor& x)
{
    if (x.rank() != 1) shape_fail(s, x, nullptr, "operand must be a vector");
}

inline Tensor evaluate(const OpSpec& s, const Tensor& a, const Tensor* b)
{
    switch (s.op) {
    case Op::leaf: throw Error("evaluate: leaf has no forward rule");
    case Op::matmul: return matmul(s, a, *b);
    case Op::add_bias: {
        require_matrix(s, a);
        if (b->rank() != 1 || b->size() != a.cols()) shape_fail(s, a, b, "bias length must equal column count");
        Tensor out = a;
        const std::size_t n = a.rows(), k = a.cols();
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < k; ++c) out[r * k + c] += (*b)[c];
        return out;
    }
    case Op::leaky_relu: {
        const double alpha = s.scalar;
        return unary_map(a, [alpha](double v) { return v > 0.0 ? v : alpha * v; });
    }
    case Op::tanh: return unary_map(a, [](double v) { return std::tanh(v); });
    case Op::square: return unary_map(a, [](double v) { return v * v; });
    case Op::subtract: return binary_map(s, a, *b, [](double x, double y) { return x - y; });
    case Op::add: return binary_map(s, a, *b, [](double x, double y) { return x + y; });
    case Op::mul: return binary_map(s, a, *b, [](double x, double y) { return x * y; });
    case Op::scale: {
        const double c = s.scalar;
        return unary_map(a, [c](double v) { return c * v; });
    }
    case Op::sum: {
        double acc = 0.0;
        for (double v : a.values()) acc += v;
        return Tensor::scalar(acc);
    }
    case Op::mean: {
        double acc = 0.0;
        for (double v : a.values()) acc += v;
        return Tensor::scalar(acc / static_cast<double>(a.size()));
    }
    case Op::norm2: {
        double acc = 0.0;
        for (double v : a.values()) acc += v * v;
        return Tensor::scalar(std::sqrt(acc));
    }
    case Op::row_norm: {
        require_matrix(s, a);
        Tensor out(Shape{a.rows()});
        for (std::size_t r = 0; r < a.rows(); ++r) {
            double acc = 0.0;
            for (double v : a.row(r)) acc += v * v;
            out[r] = std::sqrt(acc);
        }
        return out;
    }
    case Op::sum_rows: {
        require_matrix(s, a);
        Tensor out(Shape{a.cols()});
        for (std::size_t r = 0; r < a.rows(); ++r)
            for (std::size_t c = 0; c < a.cols(); ++c) out[c] += a(r, c);
        return out;
    }
    case Op::broadcast_rows: {
        require_vector(s, a);
        Tensor out(Shape{s.count, a.size()});
        for (std::size_t r = 0; r < s.count; ++r)
            for (std::size_t c = 0; c < a.size(); ++c) out(r, c) = a[c];
        return out;
    }
    case Op::row_sum: {
        require_matrix(s, a);
        Tensor out(Shape{a.rows()});
        for (std::size_t r = 0; r < a.rows(); ++r) {
            double acc = 0.0;
            for (double v : a.row(r)) acc += v;
            out[r] = acc;
        }
        return out;
    }
    case Op::broadcast_cols: {
        require_vector(s, a);
        Tensor out(Shape{a.size(), s.count});
        for (std::size_t r = 0; r < a.size(); ++r)
            for (std::size_t c = 0; c < s.count; ++c) out(r, c) = a[r];
        return out;
    }
    case Op::row_scale: {
        require_matrix(s, a);
        if (b->rank() != 1 || b->size() != a.rows()) shape_fail(s, a, b, "scale length must equal row count");
        Tensor out = a;
        for (std::size_t r = 0; r < a.rows(); ++r)
            for (double& v : out.row(r)) v *= (*b)[r];
        return out;
    }
    case Op::expand: {
        if (a.size() != 1) shape_fail(s, a, nullptr, "expand needs a single-element operand");
        return Tensor(s.shape, a[0]);
    }
    case Op::reshape: {
        if (element_count(s.shape) != a.size()) shape_fail(s, a, nullptr, "element count changes");
        return Tensor(s.shape, a.storage());
    }
    case Op::leaky_relu_grad: {
        const double alpha = s.scalar;
        return binary_map(s, a, *b, [alpha](double x, double g) { return x > 0.0 ? g : alpha * g; });
    }
    case Op::tanh_grad: return binary_map(s, a, *b, [](double y, double g) { return g * (1.0 - y * y); });
    case Op::safe_div:
        return binary_map(s, a, *b, [](double x, double y) { return y == 0.0 ? 0.0 : x / y; });
    }
    throw Error("evaluate: unknown op");
}

} // namespace detail

/// Append-only tape. Every node's inputs precede it, so node order is a
/// topological order and a reverse sweep visits consumers before producers.
class Graph {
public:
    NodeId parameter(Tensor value) { return leaf(std::move(value), LeafKind::parameter); }
    NodeId input(Tensor value) { return leaf(std::move(value), LeafKind::input); }
    NodeId constant(Tensor value) { return leaf(std::move(value), LeafKind::constant); }

    /// Generic forward op: evaluates eagerly and appends the result.
    NodeId apply(const OpSpec& spec, std::span<const NodeId> inputs)
    {
        const int arity = op_arity(spec.op);
        if (spec.op == Op::leaf) throw Error("apply: use parameter()/input()/constant() for leaves");
        if (static_cast<int>(inputs.size()) != arity)
            throw Error(std::string(op_name(spec.op)) + ": expects " + std::to_string(arity) + " inputs");
        for (NodeId id : inputs) check(id);
        const Tensor& a = nodes_[inputs[0].index].value;
        const Tensor* b = arity == 2 ? &nodes_[inputs[1].index].value : nullptr;
        Tensor out = detail::evaluate(spec, a, b);
        if (!out.all_finite())
            throw NonFiniteError(std::string(op_name(spec.op)) + ": non-finite output");
        Node node{spec, {}, LeafKind::none, std::move(out)};
        for (int i = 0; i < arity; ++i) node.inputs[i] = inputs[i];
        nodes_.push_back(std::move(node));
        return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    NodeId matmul(NodeId a, NodeId b, bool transpose_a = false, bool transpose_b = false)
    {
        OpSpec s{Op::matmul};
        s.transpose_a = transpose_a;
        s.transpose_b = transpose_b;
        return binary(s, a, b);
    }
    NodeId add_bias(NodeId x, NodeId bias) { return binary({Op::add_bias}, x, bias); }
    NodeId leaky_relu(NodeId x, double alpha) { return unary({Op::leaky_relu, alpha}, x); }
    NodeId tanh(NodeId x) { return unary({Op::tanh}, x); }
    NodeId square(NodeId x) { return unary({Op::square}, x); }
    NodeId subtract(NodeId a, NodeId b) { return binary({Op::subtract}, a, b); }
    NodeId add(NodeId a, NodeId b) { return binary({Op::add}, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary({Op::mul}, a, b); }
    NodeId scale(NodeId x, double c) { return unary({Op::scale, c}, x); }
    NodeId sum(NodeId x) { return unary({Op::sum}, x); }
    NodeId mean(NodeId x) { return unary({Op::mean}, x); }
    NodeId norm2(NodeId x) { return unary({Op::norm2}, x); }
    NodeId row_norm(NodeId x) { return unary({Op::row_norm}, x); }
    NodeId sum_rows(NodeId x) { return unary({Op::sum_rows}, x); }
    NodeId broadcast_rows(NodeId v, std::size_t rows) { return unary({Op::broadcast_rows, 0.0, rows}, v); }
    NodeId row_sum(NodeId x) { return unary({Op::row_sum}, x); }
    NodeId broadcast_cols(NodeId v, std::size_t cols) { return unary({Op::broadcast_cols, 0.0, cols}, v); }
    NodeId row_scale(NodeId x, NodeId s) { return binary({Op::row_scale}, x, s); }
    NodeId expand(NodeId s, Shape shape) { return unary({Op::expand, 0.0, 0, std::move(shape)}, s); }
    NodeId reshape(NodeId x, Shape shape) { return unary({Op::reshape, 0.0, 0, std::move(shape)}, x); }
    NodeId leaky_relu_grad(NodeId x, NodeId g, double alpha) { return binary({Op::leaky_relu_grad, alpha}, x, g); }
    NodeId tanh_grad(NodeId y, NodeId g) { return binary({Op::tanh_grad}, y, g); }
    NodeId safe_div(NodeId a, NodeId b) { return binary({Op::safe_div}, a, b); }

    const Tensor& value(NodeId id) const { return node(id).value; }
    const Node& node(NodeId id) const
    {
        check(id);
        return nodes_[id.index];
    }
    std::size_t size() const noexcept { return nodes_.size(); }

    bool is_marked_leaf(NodeId id) const
    {
        const LeafKind k = node(id).leaf;
        return k == LeafKind::parameter || k == LeafKind::input;
    }

private:
    NodeId leaf(Tensor value, LeafKind kind)
    {
        if (!value.all_finite()) throw NonFiniteError("leaf: non-finite value");
        nodes_.push_back(Node{OpSpec{}, {}, kind, std::move(value)});
        return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    NodeId unary(const OpSpec& s, NodeId a)
    {
        const std::array<NodeId, 1> in{a};
        return apply(s, in);
    }

    NodeId binary(const OpSpec& s, NodeId a, NodeId b)
    {
        const std::array<NodeId, 2> in{a, b};
        return apply(s, in);
    }

    void check(NodeId id) const
    {
        if (id.index >= nodes_.size()) throw Error("graph: node id out of range");
    }

    std::vector<Node> nodes_;
};

} // namespace w1fe::ad
