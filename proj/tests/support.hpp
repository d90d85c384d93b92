#pragma once

#include "seqcox/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace seqcox::test {

/// Central difference of the scalar `f()` with respect to m(i, j).
template <class F>
double central_difference(F&& f, Matrix& m, Index i, Index j, double h = 1e-5) {
    const double saved = m(i, j);
    m(i, j) = saved + h;
    const double up = f();
    m(i, j) = saved - h;
    const double down = f();
    m(i, j) = saved;
    return (up - down) / (2.0 * h);
}

/// |analytic - numeric| scaled by max(1, |numeric|).
inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

inline Matrix random_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = n(rng);
    return m;
}

}  // namespace seqcox::test
