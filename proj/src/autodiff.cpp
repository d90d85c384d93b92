#include "seqcox/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace seqcox {

std::string_view to_string(OpKind kind) {
    switch (kind) {
        case OpKind::constant: return "constant";
        case OpKind::variable: return "variable";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::sub: return "sub";
        case OpKind::hadamard: return "hadamard";
        case OpKind::scale: return "scale";
        case OpKind::tanh: return "tanh";
        case OpKind::sigmoid: return "sigmoid";
        case OpKind::relu: return "relu";
        case OpKind::softmax_rows: return "softmax_rows";
        case OpKind::concat: return "concat";
        case OpKind::slice: return "slice";
        case OpKind::transpose: return "transpose";
        case OpKind::mean: return "mean";
        case OpKind::mean_rows: return "mean_rows";
        case OpKind::sum: return "sum";
        case OpKind::mse: return "mse";
    }
    return "unknown";
}

Matrix ordered_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (Index j = 0; j < b.cols(); ++j) {
        for (Index i = 0; i < a.rows(); ++i) {
            double acc = 0.0;
            for (Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    }
    return out;
}

const Matrix& Gradients::operator[](Var leaf) const {
    auto it = grads_.find(leaf.id);
    if (it == grads_.end()) throw std::out_of_range("no gradient recorded for node " + std::to_string(leaf.id));
    return it->second;
}

const Graph::Node& Graph::node(Var v) const {
    if (v.graph != this || v.id >= nodes_.size()) {
        throw std::invalid_argument("node " + std::to_string(v.id) + " does not belong to this graph");
    }
    return nodes_[v.id];
}

Var Graph::push(Node n, std::string_view op) {
    if (!n.value.allFinite()) {
        throw std::domain_error("non-finite output from " + std::string(op) + " " + shape_string(n.value));
    }
    if (n.kind != OpKind::constant && n.kind != OpKind::variable) {
        n.needs_grad = std::any_of(n.inputs.begin(), n.inputs.end(),
                                   [&](std::size_t id) { return nodes_[id].needs_grad; });
    }
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Matrix value) {
    return push(Node{OpKind::constant, {}, std::move(value)}, "constant");
}

Var Graph::variable(Matrix value) {
    Node n{OpKind::variable, {}, std::move(value)};
    n.needs_grad = true;
    return push(std::move(n), "variable");
}

namespace {

[[noreturn]] void shape_error(std::string_view op, const Matrix& a, const Matrix& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                                shape_string(b));
}

}  // namespace

Var Graph::matmul(Var a, Var b) {
    const Matrix& x = node(a).value;
    const Matrix& y = node(b).value;
    if (x.cols() != y.rows()) shape_error("matmul", x, y);
    return push(Node{OpKind::matmul, {a.id, b.id}, ordered_matmul(x, y)}, "matmul");
}

Var Graph::add(Var a, Var b) {
    const Matrix& x = node(a).value;
    const Matrix& y = node(b).value;
    if (x.rows() == y.rows() && x.cols() == y.cols()) {
        return push(Node{OpKind::add, {a.id, b.id}, x + y}, "add");
    }
    if (y.rows() == 1 && y.cols() == x.cols()) {
        Matrix out = x.rowwise() + y.row(0);
        return push(Node{OpKind::add, {a.id, b.id}, std::move(out)}, "add");
    }
    shape_error("add", x, y);
}

Var Graph::sub(Var a, Var b) {
    const Matrix& x = node(a).value;
    const Matrix& y = node(b).value;
    if (x.rows() != y.rows() || x.cols() != y.cols()) shape_error("sub", x, y);
    return push(Node{OpKind::sub, {a.id, b.id}, x - y}, "sub");
}

Var Graph::hadamard(Var a, Var b) {
    const Matrix& x = node(a).value;
    const Matrix& y = node(b).value;
    if (x.rows() != y.rows() || x.cols() != y.cols()) shape_error("hadamard", x, y);
    return push(Node{OpKind::hadamard, {a.id, b.id}, x.cwiseProduct(y)}, "hadamard");
}

Var Graph::scale(Var a, double factor) {
    Node n{OpKind::scale, {a.id}, node(a).value * factor};
    n.factor = factor;
    return push(std::move(n), "scale");
}

Var Graph::tanh(Var a) {
    return push(Node{OpKind::tanh, {a.id}, node(a).value.array().tanh().matrix()}, "tanh");
}

Var Graph::sigmoid(Var a) {
    Matrix y = node(a).value.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    return push(Node{OpKind::sigmoid, {a.id}, std::move(y)}, "sigmoid");
}

Var Graph::relu(Var a) {
    return push(Node{OpKind::relu, {a.id}, node(a).value.cwiseMax(0.0)}, "relu");
}

Var Graph::softmax_rows(Var a) {
    const Matrix& x = node(a).value;
    Matrix y(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        double z = 0.0;
        for (Index j = 0; j < x.cols(); ++j) z += (y(i, j) = std::exp(x(i, j) - m));
        y.row(i) /= z;
    }
    return push(Node{OpKind::softmax_rows, {a.id}, std::move(y)}, "softmax_rows");
}

Var Graph::concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
    const Matrix& first = node(parts.front()).value;
    Index total = 0;
    std::vector<std::size_t> ids;
    for (Var p : parts) {
        const Matrix& v = node(p).value;
        if (axis == 0 ? v.cols() != first.cols() : v.rows() != first.rows()) shape_error("concat", first, v);
        total += axis == 0 ? v.rows() : v.cols();
        ids.push_back(p.id);
    }
    Matrix out = axis == 0 ? Matrix(total, first.cols()) : Matrix(first.rows(), total);
    Index offset = 0;
    for (Var p : parts) {
        const Matrix& v = node(p).value;
        if (axis == 0) {
            out.middleRows(offset, v.rows()) = v;
            offset += v.rows();
        } else {
            out.middleCols(offset, v.cols()) = v;
            offset += v.cols();
        }
    }
    Node n{OpKind::concat, std::move(ids), std::move(out)};
    n.axis = axis;
    return push(std::move(n), "concat");
}

Var Graph::slice(Var a, int axis, Index begin, Index count) {
    const Matrix& x = node(a).value;
    const Index extent = axis == 0 ? x.rows() : x.cols();
    if ((axis != 0 && axis != 1) || begin < 0 || count <= 0 || begin + count > extent) {
        throw std::invalid_argument("slice: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                                    ") on axis " + std::to_string(axis) + " out of bounds for " + shape_string(x));
    }
    Node n{OpKind::slice, {a.id}, axis == 0 ? Matrix(x.middleRows(begin, count)) : Matrix(x.middleCols(begin, count))};
    n.axis = axis;
    n.begin = begin;
    return push(std::move(n), "slice");
}

Var Graph::transpose(Var a) {
    return push(Node{OpKind::transpose, {a.id}, node(a).value.transpose()}, "transpose");
}

Var Graph::mean(Var a) {
    const Matrix& x = node(a).value;
    return push(Node{OpKind::mean, {a.id}, Matrix::Constant(1, 1, x.sum() / double(x.size()))}, "mean");
}

Var Graph::mean_rows(Var a) {
    const Matrix& x = node(a).value;
    Matrix out = x.colwise().sum() / double(x.rows());
    return push(Node{OpKind::mean_rows, {a.id}, std::move(out)}, "mean_rows");
}

Var Graph::sum(Var a) {
    return push(Node{OpKind::sum, {a.id}, Matrix::Constant(1, 1, node(a).value.sum())}, "sum");
}

Var Graph::mse(Var prediction, Var target) {
    const Matrix& p = node(prediction).value;
    const Matrix& t = node(target).value;
    if (p.rows() != t.rows() || p.cols() != t.cols()) shape_error("mse", p, t);
    const double loss = (p - t).squaredNorm() / double(p.size());
    return push(Node{OpKind::mse, {prediction.id, target.id}, Matrix::Constant(1, 1, loss)}, "mse");
}

const Matrix& Graph::value(Var v) const { return node(v).value; }

OpKind Graph::kind(Var v) const { return node(v).kind; }

std::vector<std::size_t> Graph::inputs(Var v) const { return node(v).inputs; }

Gradients Graph::backward(Var loss) const {
    const Node& root = node(loss);
    if (root.value.rows() != 1 || root.value.cols() != 1) {
        throw std::invalid_argument("backward: loss must be 1x1, got " + shape_string(root.value));
    }

    std::vector<Matrix> grad(loss.id + 1);
    std::vector<bool> touched(loss.id + 1, false);
    grad[loss.id] = Matrix::Ones(1, 1);
    touched[loss.id] = true;

    auto accumulate = [&](std::size_t id, const Matrix& g) {
        if (!nodes_[id].needs_grad) return;
        if (touched[id]) {
            grad[id] += g;
        } else {
            grad[id] = g;
            touched[id] = true;
        }
    };

    for (std::size_t id = loss.id + 1; id-- > 0;) {
        if (!touched[id]) continue;
        const Node& n = nodes_[id];
        const Matrix& g = grad[id];
        const auto& in = n.inputs;
        switch (n.kind) {
            case OpKind::constant:
            case OpKind::variable:
                break;
            case OpKind::matmul: {
                const Matrix& a = nodes_[in[0]].value;
                const Matrix& b = nodes_[in[1]].value;
                if (nodes_[in[0]].needs_grad) accumulate(in[0], ordered_matmul(g, b.transpose()));
                if (nodes_[in[1]].needs_grad) accumulate(in[1], ordered_matmul(a.transpose(), g));
                break;
            }
            case OpKind::add:
            case OpKind::sub: {
                const double sign = n.kind == OpKind::add ? 1.0 : -1.0;
                accumulate(in[0], g);
                const Matrix& b = nodes_[in[1]].value;
                if (b.rows() == g.rows()) {
                    accumulate(in[1], sign * g);
                } else {
                    accumulate(in[1], sign * Matrix(g.colwise().sum()));
                }
                break;
            }
            case OpKind::hadamard:
                accumulate(in[0], g.cwiseProduct(nodes_[in[1]].value));
                accumulate(in[1], g.cwiseProduct(nodes_[in[0]].value));
                break;
            case OpKind::scale:
                accumulate(in[0], n.factor * g);
                break;
            case OpKind::tanh:
                accumulate(in[0], g.array() * (1.0 - n.value.array().square()));
                break;
            case OpKind::sigmoid:
                accumulate(in[0], g.array() * n.value.array() * (1.0 - n.value.array()));
                break;
            case OpKind::relu:
                accumulate(in[0], g.array() * (nodes_[in[0]].value.array() > 0.0).cast<double>());
                break;
            case OpKind::softmax_rows: {
                Matrix dx(g.rows(), g.cols());
                for (Index i = 0; i < g.rows(); ++i) {
                    const double dot = g.row(i).dot(n.value.row(i));
                    dx.row(i) = n.value.row(i).array() * (g.row(i).array() - dot);
                }
                accumulate(in[0], dx);
                break;
            }
            case OpKind::concat: {
                Index offset = 0;
                for (std::size_t part : in) {
                    const Matrix& v = nodes_[part].value;
                    if (n.axis == 0) {
                        accumulate(part, g.middleRows(offset, v.rows()));
                        offset += v.rows();
                    } else {
                        accumulate(part, g.middleCols(offset, v.cols()));
                        offset += v.cols();
                    }
                }
                break;
            }
            case OpKind::slice: {
                const Matrix& x = nodes_[in[0]].value;
                Matrix dx = Matrix::Zero(x.rows(), x.cols());
                if (n.axis == 0) {
                    dx.middleRows(n.begin, g.rows()) = g;
                } else {
                    dx.middleCols(n.begin, g.cols()) = g;
                }
                accumulate(in[0], dx);
                break;
            }
            case OpKind::transpose:
                accumulate(in[0], g.transpose());
                break;
            case OpKind::mean: {
                const Matrix& x = nodes_[in[0]].value;
                accumulate(in[0], Matrix::Constant(x.rows(), x.cols(), g(0, 0) / double(x.size())));
                break;
            }
            case OpKind::mean_rows: {
                const Matrix& x = nodes_[in[0]].value;
                accumulate(in[0], g.replicate(x.rows(), 1) / double(x.rows()));
                break;
            }
            case OpKind::sum: {
                const Matrix& x = nodes_[in[0]].value;
                accumulate(in[0], Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
                break;
            }
            case OpKind::mse: {
                const Matrix& p = nodes_[in[0]].value;
                const Matrix& t = nodes_[in[1]].value;
                Matrix dp = (2.0 * g(0, 0) / double(p.size())) * (p - t);
                accumulate(in[0], dp);
                accumulate(in[1], -dp);
                break;
            }
        }
    }

    Gradients out;
    for (std::size_t id = 0; id <= loss.id; ++id) {
        if (nodes_[id].kind != OpKind::variable) continue;
        out.grads_[id] = touched[id] ? grad[id] : Matrix::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
    }
    return out;
}

}  // namespace seqcox
