#pragma once

#include "seqcox/cox.hpp"
#include "seqcox/data.hpp"

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace seqcox {

enum class ClassicalKind {
    cox,           ///< one row per patient, time to first recurrence
    cox_interval,  ///< every interval treated as an independent subject
    ag,
    pwp,
    wlw,
};

std::string_view to_string(ClassicalKind kind);
ClassicalKind classical_kind_from_string(std::string_view name);

enum class Timescale { total, gap };

struct RiskInterval {
    PatientId patient_id = 0;
    double start = 0.0;
    double stop = 0.0;
    bool event = false;
    Vector covariates;
    int stratum = 0;
    PatientId cluster = 0;
};

struct RiskIntervalTable {
    ClassicalKind kind = ClassicalKind::ag;
    std::vector<std::string> covariate_names;
    std::vector<RiskInterval> rows;
    bool clustered = true;  ///< use the cluster-robust variance
    std::vector<std::string> warnings;

    CoxData to_cox_data() const;
    std::size_t n_strata() const;
    std::size_t n_clusters() const;
};

/// Covariates used for the classical comparators.
std::vector<std::string> default_classical_covariates();

/// Counting-process rows (start, stop], event iff status 1, cluster = patient.
RiskIntervalTable expand_ag(const RecordTable& records, const std::vector<std::string>& covariates);

/// Stratum = interval order; gap timescale shifts each row to (0, stop - start].
/// Strata with fewer than two events are dropped.
RiskIntervalTable expand_pwp(const RecordTable& records, const std::vector<std::string>& covariates,
                             Timescale timescale = Timescale::total);

/// Every patient in every stratum k = 1..K, timed from study entry to the k-th
/// recurrence or the end of follow-up.
RiskIntervalTable expand_wlw(const RecordTable& records, const std::vector<std::string>& covariates, int max_order = 4);

/// Time to first recurrence per patient; covariates from the first interval.
RiskIntervalTable expand_first_event(const RecordTable& records, const std::vector<std::string>& covariates);

/// Each interval as an independent subject with time stop - start, no clustering.
RiskIntervalTable expand_per_interval(const RecordTable& records, const std::vector<std::string>& covariates);

RiskIntervalTable expand(ClassicalKind kind, const RecordTable& records, const std::vector<std::string>& covariates,
                         Timescale timescale = Timescale::total, int wlw_order = 4);

struct ClassicalFit {
    ClassicalKind kind = ClassicalKind::ag;
    CoxFit fit;
    std::size_t n_strata = 0;
    std::size_t n_clusters = 0;
    std::vector<std::string> covariate_names;
};

ClassicalFit fit_classical(const RiskIntervalTable& table, const CoxOptions& options = {});

nlohmann::json summary_json(const ClassicalFit& fit);

}  // namespace seqcox
