#include "seqcox/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace seqcox {

void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state,
               const AdamOptions& options) {
    if (!(options.lr > 0.0)) throw std::invalid_argument("adam: learning rate must be positive");
    if (params.size() != grads.size()) throw std::invalid_argument("adam: params and grads differ in count");
    if (state.step == 0) {
        state.m.clear();
        state.v.clear();
        for (const Matrix& p : params) {
            state.m.push_back(Matrix::Zero(p.rows(), p.cols()));
            state.v.push_back(Matrix::Zero(p.rows(), p.cols()));
        }
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam: state does not match parameter list");

    ++state.step;
    const double c1 = 1.0 - std::pow(options.beta1, double(state.step));
    const double c2 = 1.0 - std::pow(options.beta2, double(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].rows() != grads[i].rows() || params[i].cols() != grads[i].cols()) {
            throw std::invalid_argument("adam: gradient " + std::to_string(i) + " has shape " +
                                        shape_string(grads[i]) + ", parameter has " + shape_string(params[i]));
        }
        state.m[i] = options.beta1 * state.m[i] + (1.0 - options.beta1) * grads[i];
        state.v[i] = options.beta2 * state.v[i] + (1.0 - options.beta2) * grads[i].cwiseAbs2();
        params[i].array() -=
            options.lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + options.eps);
    }
}

}  // namespace seqcox
