#include "seqcox/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace seqcox {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one axis");
    for (auto d : shape) {
        if (d == 0) throw std::invalid_argument("tensor shape " + shape_string(shape) + " has a zero axis");
    }
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    values_.assign(element_count(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (element_count(shape_) != values_.size()) {
        throw std::invalid_argument("tensor shape " + shape_string(shape_) + " needs " +
                                    std::to_string(element_count(shape_)) + " values, got " +
                                    std::to_string(values_.size()));
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i])) {
            throw std::invalid_argument("non-finite tensor value at flat index " + std::to_string(i));
        }
    }
}

Tensor Tensor::unchecked(std::vector<std::size_t> shape, std::vector<double> values) {
    Tensor t;
    if (element_count(shape) != values.size()) throw std::invalid_argument("tensor size mismatch");
    t.shape_ = std::move(shape);
    t.values_ = std::move(values);
    return t;
}

Tensor Tensor::from_matrix(const Matrix& m) {
    std::vector<double> v(static_cast<std::size_t>(m.size()));
    Eigen::Map<RowMatrix>(v.data(), m.rows(), m.cols()) = m;
    return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(v));
}

double& Tensor::operator()(std::size_t i, std::size_t j, std::size_t k) {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
}

double Tensor::operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
}

Matrix Tensor::matrix() const {
    if (rank() != 2) throw std::logic_error("matrix() needs a rank-2 tensor, shape is " + shape_string(shape_));
    return Eigen::Map<const RowMatrix>(values_.data(), Index(shape_[0]), Index(shape_[1]));
}

Matrix Tensor::sample(std::size_t i) const {
    if (rank() != 3) throw std::logic_error("sample() needs a rank-3 tensor");
    const std::size_t block = shape_[1] * shape_[2];
    return Eigen::Map<const RowMatrix>(values_.data() + i * block, Index(shape_[1]), Index(shape_[2]));
}

Matrix Tensor::step(std::size_t t) const {
    if (rank() != 3) throw std::logic_error("step() needs a rank-3 tensor");
    Matrix out(static_cast<Index>(shape_[0]), static_cast<Index>(shape_[2]));
    for (std::size_t i = 0; i < shape_[0]; ++i)
        for (std::size_t k = 0; k < shape_[2]; ++k) out(Index(i), Index(k)) = (*this)(i, t, k);
    return out;
}

std::string shape_string(std::span<const std::size_t> shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

std::string shape_string(const Matrix& m) {
    return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

}  // namespace seqcox
