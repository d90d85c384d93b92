#pragma once

#include "seqcox/tensor.hpp"

#include <span>
#include <vector>

namespace seqcox {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second moment estimates, one pair per parameter matrix.
struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    long step = 0;
};

/// One bias-corrected Adam update applied in place. `state` is zero-initialised
/// on the first call from the shapes of `params`.
void adam_step(std::span<Matrix> params, std::span<const Matrix> grads, AdamState& state,
               const AdamOptions& options = {});

}  // namespace seqcox
