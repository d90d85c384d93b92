#pragma once

#include "seqcox/data.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>

namespace seqcox {

/// Weibull proportional-hazards renewal process with one continuous
/// (standard normal) and one binary covariate.
struct SimConfig {
    std::size_t n_patients = 50;
    double weibull_shape = 1.5;
    double weibull_scale = 10.0;          ///< months
    std::array<double, 2> beta{1.0, -0.5};  ///< (continuous, binary)
    double binary_prob = 0.5;
    double followup_mean = 12.2;          ///< months; calibrated for 40% censoring at the defaults
    double followup_sd = 4.0;
    double target_censoring = 0.40;
    std::uint64_t seed = 0;
};

void validate(const SimConfig& cfg);
nlohmann::json to_json(const SimConfig& cfg);

/// Rows use the fixed table schema: treatment = 1 + binary covariate,
/// size = continuous covariate, recur = the patient's event count,
/// number = 1, rtumor = rsize = 0, status 1 (recurrence) or 0 (end of follow-up).
RecordTable simulate_recurrent(const SimConfig& cfg);

/// Fraction of patients with no recurrence before the end of follow-up.
double simulated_censoring(const RecordTable& table);

/// Bisection on followup_mean until a 1000-patient pilot lands within 0.02 of
/// target_censoring. Throws when the target is outside the reachable range.
double calibrate_followup(const SimConfig& cfg);

/// Andersen-Gill fit of the simulated covariates with Wald p-values.
nlohmann::json significance_report(const RecordTable& table);

/// Standard normal quantile.
double normal_quantile(double p);

}  // namespace seqcox
