#include "seqcox/tsne.hpp"

#include "seqcox/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace seqcox {

namespace {

Matrix squared_distances(const Matrix& x) {
    const Index n = x.rows();
    Matrix d(n, n);
    for (Index i = 0; i < n; ++i) {
        d(i, i) = 0.0;
        for (Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).squaredNorm();
    }
    return d;
}

// Squared distances this far below the data scale count as exact ties, so
// duplicate jitter does not create neighbourhood structure of its own.
constexpr double kTieFraction = 1e-12;

// Row i of the conditional distribution at precision exp(log_beta); returns its entropy.
double conditional_row(const Matrix& d, Index i, double log_beta, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
    const Index n = d.rows();
    double dmin = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n; ++j)
        if (j != i) dmin = std::min(dmin, d(i, j));
    const double beta = std::exp(log_beta);
    double z = 0.0, weighted = 0.0;
    for (Index j = 0; j < n; ++j) {
        if (j == i) {
            row[j] = 0.0;
            continue;
        }
        const double shifted = d(i, j) - dmin;
        row[j] = std::exp(-beta * shifted);
        z += row[j];
        weighted += row[j] * shifted;
    }
    row /= z;
    return std::log(z) + beta * weighted / z;
}

}  // namespace

double max_perplexity(std::size_t n) { return (double(n) - 1.0) / 3.0; }

Affinities tsne_affinities(const Matrix& x, double perplexity) {
    const Index n = x.rows();
    if (n < 4) throw std::invalid_argument("t-SNE needs at least 4 points");
    if (!x.allFinite()) throw std::invalid_argument("t-SNE input must be finite");
    if (!(perplexity > 0)) throw std::invalid_argument("perplexity must be positive");
    Affinities out;
    out.perplexity = perplexity;
    if (perplexity > max_perplexity(std::size_t(n))) {
        out.perplexity = max_perplexity(std::size_t(n));
        log::warn("t-SNE: perplexity " + std::to_string(perplexity) + " too large for " + std::to_string(n) +
                  " points; using " + std::to_string(out.perplexity));
    }
    const double target = std::log(out.perplexity);
    Matrix d = squared_distances(x);
    const double floor = kTieFraction * std::max(1.0, d.maxCoeff());
    d = (d.array() < floor).select(0.0, d);
    Matrix cond(n, n);
    out.entropies.resize(std::size_t(n));
    std::size_t isolated = 0;
    for (Index i = 0; i < n; ++i) {
        if (d.row(i).maxCoeff() == 0.0) {
            // No distinct neighbour: every precision gives the uniform row.
            out.entropies[std::size_t(i)] = conditional_row(d, i, 0.0, cond.row(i));
            ++isolated;
            continue;
        }
        // Entropy falls as the precision grows; bisect on log precision.
        double lo = -200.0, hi = 200.0, h = 0.0;
        for (int it = 0; it < 400; ++it) {
            const double mid = 0.5 * (lo + hi);
            h = conditional_row(d, i, mid, cond.row(i));
            if (std::abs(h - target) < 1e-9) break;
            (h > target ? lo : hi) = mid;
        }
        out.entropies[std::size_t(i)] = h;
    }
    if (isolated > 0) {
        log::warn("t-SNE: " + std::to_string(isolated) + " point(s) coincide with every other point; their affinities are uniform");
    }
    out.p = cond + cond.transpose();
    out.p /= out.p.sum();
    return out;
}

Embedding tsne(const Matrix& input, const EmbedConfig& cfg) {
    if (cfg.out_dims < 1) throw std::invalid_argument("t-SNE out_dims must be positive");
    if (cfg.iterations < 250) throw std::invalid_argument("t-SNE needs at least 250 iterations");
    if (!(cfg.learning_rate > 0)) throw std::invalid_argument("t-SNE learning rate must be positive");
    const Index n = input.rows();
    if (n < 4) throw std::invalid_argument("t-SNE needs at least 4 points");

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal;
    Matrix x = input;
    const Matrix d0 = squared_distances(x);
    bool duplicates = false;
    for (Index i = 0; i < n && !duplicates; ++i)
        for (Index j = i + 1; j < n; ++j)
            if (d0(i, j) == 0.0) {
                duplicates = true;
                break;
            }
    if (duplicates) {
        log::warn("t-SNE: duplicate points found; adding 1e-10 jitter");
        for (Index i = 0; i < x.rows(); ++i)
            for (Index j = 0; j < x.cols(); ++j) x(i, j) += 1e-10 * normal(rng);
    }

    const Affinities aff = tsne_affinities(x, cfg.perplexity);
    const Matrix& p = aff.p;
    const Index k = Index(cfg.out_dims);

    Matrix y(n, k);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < k; ++j) y(i, j) = cfg.init_std * normal(rng);
    Matrix update = Matrix::Zero(n, k);
    Matrix gains = Matrix::Ones(n, k);
    Matrix num(n, n);
    Matrix grad(n, k);

    Embedding out;
    out.perplexity = aff.perplexity;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const double exaggeration = iter < cfg.exaggeration_iterations ? cfg.early_exaggeration : 1.0;
        const double momentum = iter < cfg.momentum_switch ? cfg.initial_momentum : cfg.final_momentum;

        double qsum = 0.0;
        for (Index i = 0; i < n; ++i) {
            num(i, i) = 0.0;
            for (Index j = i + 1; j < n; ++j) {
                num(i, j) = num(j, i) = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
                qsum += 2.0 * num(i, j);
            }
        }
        double kl = 0.0;
        grad.setZero();
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
                if (i == j) continue;
                const double q = std::max(num(i, j) / qsum, 1e-300);
                if (p(i, j) > 0) kl += p(i, j) * std::log(p(i, j) / q);
                grad.row(i) += 4.0 * (exaggeration * p(i, j) - q) * num(i, j) * (y.row(i) - y.row(j));
            }
        }
        out.kl_trace.push_back(kl);

        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < k; ++j) {
                const bool same_sign = (grad(i, j) > 0) == (update(i, j) > 0);
                gains(i, j) = std::max(same_sign ? gains(i, j) * 0.8 : gains(i, j) + 0.2, 0.01);
            }
        }
        update = momentum * update - cfg.learning_rate * gains.cwiseProduct(grad);
        y += update;
        y.rowwise() -= y.colwise().mean();
        if (!y.allFinite()) throw std::domain_error("t-SNE diverged at iteration " + std::to_string(iter));
    }
    out.kl = out.kl_trace.back();
    out.y = y;
    return out;
}

}  // namespace seqcox
