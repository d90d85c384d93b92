#pragma once

#include "seqcox/tensor.hpp"

#include <cstddef>
#include <map>
#include <string_view>
#include <vector>

namespace seqcox {

class Graph;

enum class OpKind {
    constant,
    variable,
    matmul,
    add,
    sub,
    hadamard,
    scale,
    tanh,
    sigmoid,
    relu,
    softmax_rows,
    concat,
    slice,
    transpose,
    mean,
    mean_rows,
    sum,
    mse,
};

std::string_view to_string(OpKind kind);

/// Handle to a node of a Graph. Cheap to copy; only valid while its graph lives.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;
};

/// Gradients of a scalar loss with respect to every `variable` leaf it depends on.
class Gradients {
public:
    const Matrix& operator[](Var leaf) const;
    bool contains(Var leaf) const { return grads_.count(leaf.id) != 0; }
    std::size_t size() const { return grads_.size(); }

private:
    friend class Graph;
    std::map<std::size_t, Matrix> grads_;
};

/// Append-only tape of 2-D operations with reverse-mode differentiation.
///
/// Nodes are stored in creation order, which is a topological order. Every
/// value is checked for NaN/Inf as it is produced. Matrix products use a
/// fixed summation order so a row's result does not depend on how many other
/// rows share the batch.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf that is not differentiated.
    Var constant(Matrix value);
    /// Leaf whose gradient is reported by `backward` (trainable parameter or watched input).
    Var variable(Matrix value);

    Var matmul(Var a, Var b);
    /// Elementwise sum; `b` may also be a 1 x cols row broadcast over the rows of `a`.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var scale(Var a, double factor);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var relu(Var a);
    /// Row-wise softmax with max subtraction.
    Var softmax_rows(Var a);
    /// Concatenate along axis 0 (rows) or 1 (columns).
    Var concat(const std::vector<Var>& parts, int axis);
    Var slice(Var a, int axis, Index begin, Index count);
    Var transpose(Var a);
    /// Mean of all entries, 1 x 1.
    Var mean(Var a);
    /// Column means over rows, 1 x cols.
    Var mean_rows(Var a);
    /// Sum of all entries, 1 x 1.
    Var sum(Var a);
    /// Mean squared error between a prediction and a target of equal shape, 1 x 1.
    Var mse(Var prediction, Var target);

    const Matrix& value(Var v) const;
    OpKind kind(Var v) const;
    std::vector<std::size_t> inputs(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a 1 x 1 node. Leaves reached along several paths
    /// receive the sum of the path contributions.
    Gradients backward(Var loss) const;

private:
    struct Node {
        OpKind kind;
        std::vector<std::size_t> inputs;
        Matrix value;
        bool needs_grad = false;
        double factor = 0.0;
        int axis = 0;
        Index begin = 0;
    };

    const Node& node(Var v) const;
    Var push(Node n, std::string_view op);

    std::vector<Node> nodes_;
};

/// Product with a fixed k-ascending summation order for every output entry.
Matrix ordered_matmul(const Matrix& a, const Matrix& b);

inline Var operator+(Var a, Var b) { return a.graph->add(a, b); }
inline Var operator-(Var a, Var b) { return a.graph->sub(a, b); }
inline Var operator*(double s, Var a) { return a.graph->scale(a, s); }
inline Var matmul(Var a, Var b) { return a.graph->matmul(a, b); }
inline Var hadamard(Var a, Var b) { return a.graph->hadamard(a, b); }
inline Var tanh(Var a) { return a.graph->tanh(a); }
inline Var sigmoid(Var a) { return a.graph->sigmoid(a); }
inline Var relu(Var a) { return a.graph->relu(a); }
inline Var softmax_rows(Var a) { return a.graph->softmax_rows(a); }
inline Var transpose(Var a) { return a.graph->transpose(a); }
inline Var slice_cols(Var a, Index begin, Index count) { return a.graph->slice(a, 1, begin, count); }
inline Var slice_rows(Var a, Index begin, Index count) { return a.graph->slice(a, 0, begin, count); }
inline Var mean(Var a) { return a.graph->mean(a); }
inline Var mean_rows(Var a) { return a.graph->mean_rows(a); }
inline Var sum(Var a) { return a.graph->sum(a); }
inline Var mse(Var prediction, Var target) { return prediction.graph->mse(prediction, target); }

}  // namespace seqcox
