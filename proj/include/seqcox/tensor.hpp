#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace seqcox {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Dense row-major tensor of doubles with an arbitrary positive shape.
///
/// Values coming from outside the program are checked for NaN/Inf at
/// construction; use `Tensor::unchecked` only for values produced internally.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor unchecked(std::vector<std::size_t> shape, std::vector<double> values);
    static Tensor from_matrix(const Matrix& m);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return values_.size(); }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }

    double& operator()(std::size_t i, std::size_t j, std::size_t k);
    double operator()(std::size_t i, std::size_t j, std::size_t k) const;

    /// Rank-2 view as an Eigen matrix copy.
    Matrix matrix() const;
    /// For a rank-3 tensor N x T x F, the T x F block of sample `i`.
    Matrix sample(std::size_t i) const;
    /// For a rank-3 tensor N x T x F, the N x F slice at step `t`.
    Matrix step(std::size_t t) const;

    bool operator==(const Tensor& other) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

std::string shape_string(std::span<const std::size_t> shape);
std::string shape_string(const Matrix& m);

}  // namespace seqcox
