#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "stgraph/tensor.hpp"

namespace stgraph::ad {

/// Handle to a node of an ExprGraph. Valid only for the graph that created it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

enum class Op : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    Matmul,
    ConcatCols,
    ConcatRows,
    SumRows,
    SumAll,
    LeakyRelu,
    Relu,
    Exp,
    Log,
    Sigmoid,
    Softplus,
    GatherRows,
    ScatterAddRows,
    SegmentSoftmax,
    SoftmaxRows,
    ScaleRows,
    Dropout,
    CeRows,
    Reshape,
};

const char* op_name(Op op);

/// Gradients of one backward pass, keyed by node id. Leaves that do not
/// affect the loss report zero gradients of the leaf shape.
class GradientTape {
public:
    GradientTape() = default;
    explicit GradientTape(std::vector<Tensor> adjoints) : adjoints_(std::move(adjoints)) {}

    bool touched(Var v) const;
    /// Gradient for `v`; zeros of the node's shape when untouched.
    Tensor grad(Var v, const class ExprGraph& g) const;

private:
    std::vector<Tensor> adjoints_;  // empty tensor == untouched (zero)
};

/// Define-by-run expression graph over tensors with reverse-mode gradients.
/// Nodes are appended during the forward pass; input ids always precede the
/// node that consumes them, so the recording is acyclic by construction.
class ExprGraph {
public:
    struct Node {
        Op op = Op::Leaf;
        std::array<int, 2> in{-1, -1};
        std::vector<int> extra_in;        // n-ary concat inputs
        Tensor value;
        double alpha = 0.0;               // scale factor / slope / added scalar
        bool trans_a = false, trans_b = false;
        std::vector<std::int64_t> index;  // gather/scatter/segment ids/labels
        std::vector<double> mask;         // dropout keep mask (already inverse-scaled)
        std::vector<std::size_t> prev_shape;  // reshape backward
    };

    Var leaf(Tensor value);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double factor);
    Var add_scalar(Var a, double value);
    Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
    Var concat_cols(const std::vector<Var>& parts);
    Var concat_rows(const std::vector<Var>& parts);
    /// Concatenation along the last axis: vectors chain end to end, matrices
    /// must agree on row count.
    Var concat(const std::vector<Var>& parts);
    Var sum_rows(Var a);   // (n x d) -> (n), sum along the last axis
    Var sum_all(Var a);    // -> scalar
    Var mean_all(Var a);   // -> scalar
    Var leaky_relu(Var a, double slope);
    Var relu(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var sigmoid(Var a);
    Var softplus(Var a);
    Var gather_rows(Var a, std::vector<std::int64_t> rows);
    Var scatter_add_rows(Var a, std::vector<std::int64_t> rows, std::size_t out_rows);
    /// Per-segment softmax of a vector; segments may appear in any order.
    /// Stabilized by subtracting the per-segment maximum.
    Var segment_softmax(Var logits, std::vector<std::int64_t> segment_ids);
    Var softmax_rows(Var a);
    /// Scales row i of `matrix` by `scales[i]`.
    Var scale_rows(Var matrix, Var scales);
    /// Inverted dropout; identity when rate == 0. Mask is sampled once at
    /// recording time, so backward reuses the same mask.
    Var dropout(Var a, double rate, std::mt19937_64& rng);
    /// Per-row softmax cross-entropy of logits (n x C) against integer labels.
    Var ce_rows(Var logits, std::vector<std::int64_t> labels);
    Var reshape(Var a, std::vector<std::size_t> shape);

    const Tensor& value(Var v) const;
    std::size_t size() const { return nodes_.size(); }
    const Node& node(int id) const { return nodes_[id]; }

    /// Reverse-mode gradients of a scalar loss w.r.t. every node that feeds
    /// it. Throws if the loss is not a scalar.
    GradientTape gradient(Var loss) const;

    /// Id of the first node holding a non-finite value, or -1.
    int first_non_finite() const;

private:
    int push(Node n);
    const Tensor& val(int id) const { return nodes_[id].value; }
    void check_same_or_broadcast(const char* op, Var a, Var b) const;

    std::vector<Node> nodes_;
};

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b);
[[noreturn]] void shape_error(const char* op, const Tensor& a);

}  // namespace stgraph::ad
