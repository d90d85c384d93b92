#pragma once

#include "seqcox/data.hpp"
#include "seqcox/tensor.hpp"

#include <string>
#include <vector>

namespace seqcox {

/// Right-continuous product-limit step function, stored at the event times only.
struct SurvCurve {
    std::vector<double> times;
    std::vector<double> survival;
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> events;

    /// S(t); 1 before the first event time.
    double at(double t) const;
};

/// Censored subjects at an event time still count in that time's risk set.
SurvCurve kaplan_meier(const std::vector<SurvivalOutcome>& outcomes);

struct LogRank {
    double chi2 = 0.0;
    double p = 1.0;
    double observed_a = 0.0;
    double expected_a = 0.0;
    double variance = 0.0;
};

/// Two-group log-rank test with the hypergeometric variance, chi-square on 1 df.
LogRank logrank_test(const std::vector<SurvivalOutcome>& group_a, const std::vector<SurvivalOutcome>& group_b);

/// Upper tail of the chi-square distribution with one degree of freedom.
double chi2_1df_upper(double x);

struct RiskGroups {
    std::vector<int> labels;  ///< 1 = high risk, 0 = low risk
    double median = 0.0;
    bool degenerate = false;  ///< every score equal
};

/// Median split; scores equal to the median go to the low-risk group.
RiskGroups risk_groups(const Vector& scores);

/// Delimited text with columns time,survival,at_risk,events,group.
std::string format_km_rows(const SurvCurve& curve, const std::string& group);

}  // namespace seqcox
