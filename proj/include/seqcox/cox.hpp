#pragma once

#include "seqcox/data.hpp"
#include "seqcox/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace seqcox {

enum class Ties { efron, breslow };

std::string_view to_string(Ties ties);
Ties ties_from_string(std::string_view name);

struct CoxOptions {
    Ties ties = Ties::efron;
    double tol = 1e-9;       ///< convergence when max |score| < tol
    int max_iter = 100;
    int max_halvings = 10;
    double ridge = 0.0;      ///< penalty lambda/2 * |beta|^2, off by default
};

/// Counting-process input: row i is at risk on (start_i, stop_i]. Right-censored
/// data uses start = -infinity. Empty `strata` means one stratum; non-empty
/// `cluster` switches the covariance to the cluster-robust sandwich.
struct CoxData {
    Vector start;
    Vector stop;
    std::vector<bool> event;
    Matrix x;  ///< rows x D
    std::vector<int> strata;
    std::vector<std::int64_t> cluster;

    Index rows() const { return x.rows(); }
    void check() const;
};

/// Right-censored data from per-patient outcomes; features row i belongs to outcomes[i].
CoxData make_cox_data(const Matrix& features, const std::vector<SurvivalOutcome>& outcomes);

struct PartialLikelihood {
    double loglik = 0.0;
    Vector score;
    Matrix information;
};

/// Log partial likelihood, score and observed information at `beta`.
PartialLikelihood partial_likelihood(const CoxData& data, const Vector& beta, Ties ties);

/// Per-row score residuals at `beta`; the rows sum to the score vector.
Matrix score_residuals(const CoxData& data, const Vector& beta, Ties ties);

struct CoxFit {
    Vector beta;
    Matrix covariance;        ///< robust when cluster ids were supplied, else model-based
    Matrix model_covariance;  ///< inverse observed information
    double log_partial_likelihood = 0.0;
    double null_log_partial_likelihood = 0.0;
    double c_index = 0.5;
    double aic = 0.0;
    std::size_t n = 0;
    std::size_t n_events = 0;
    Ties ties = Ties::efron;
    bool converged = false;
    int iterations = 0;
    bool robust = false;
    bool separation = false;            ///< monotone likelihood suspected
    std::vector<bool> aliased;          ///< constant columns held at beta = 0
    std::vector<double> loglik_trace;   ///< accepted iterate log likelihoods (penalised when ridge > 0)
    std::vector<std::string> warnings;

    Vector standard_errors() const;
};

/// Newton-Raphson with step halving on the (stratified) partial likelihood.
CoxFit fit_cox(const CoxData& data, const CoxOptions& options = {});
CoxFit fit_cox(const Matrix& features, const std::vector<SurvivalOutcome>& outcomes, const CoxOptions& options = {});

/// Linear predictor x * beta.
Vector linear_predictor(const Matrix& x, const Vector& beta);

/// Harrell's C: a pair is comparable when the shorter time is an event, or the
/// times tie with exactly one event (that one counts as earlier). Higher risk
/// should mean earlier event; tied risks count one half.
double concordance_index(const Vector& risk, const Vector& time, const std::vector<bool>& event);
double concordance_index(const Vector& risk, const std::vector<SurvivalOutcome>& outcomes);

struct BaselineHazard {
    std::vector<double> times;
    std::vector<double> cumulative_hazard;
};

/// Breslow estimator of the cumulative baseline hazard, single stratum.
BaselineHazard breslow_baseline(const CoxData& data, const Vector& beta);

nlohmann::json summary_json(const CoxFit& fit, const std::vector<std::string>& names = {});

}  // namespace seqcox
