#pragma once

#include "seqcox/tensor.hpp"

#include <cstdint>
#include <vector>

namespace seqcox {

struct EmbedConfig {
    std::size_t out_dims = 2;
    double perplexity = 30.0;
    int iterations = 3000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    int exaggeration_iterations = 250;
    double initial_momentum = 0.5;
    double final_momentum = 0.8;
    int momentum_switch = 250;
    double init_std = 1e-4;
    std::uint64_t seed = 0;
};

struct Affinities {
    Matrix p;                        ///< symmetric joint probabilities, zero diagonal
    std::vector<double> entropies;   ///< conditional entropy per point, nats
    double perplexity = 0.0;         ///< value actually used after clamping
};

/// Largest perplexity allowed for n points, (n - 1) / 3.
double max_perplexity(std::size_t n);

/// Gaussian conditional affinities with per-point bandwidths matching log(perplexity),
/// symmetrised and normalised to sum 1. Perplexity above the limit is lowered with a warning.
Affinities tsne_affinities(const Matrix& x, double perplexity);

struct Embedding {
    Matrix y;                     ///< N x out_dims, column means zero
    double kl = 0.0;              ///< KL(P || Q) at the last iteration
    std::vector<double> kl_trace; ///< per iteration, true P
    double perplexity = 0.0;
};

/// Exact t-SNE. Exact duplicate rows receive 1e-10 jitter with a warning.
Embedding tsne(const Matrix& x, const EmbedConfig& cfg = {});

}  // namespace seqcox
