#include "seqcox/classical.hpp"

#include "seqcox/log.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace seqcox {

namespace {

constexpr double kMinusInf = -std::numeric_limits<double>::infinity();

Vector covariate_values(const Record& r, const std::vector<Column>& cols) {
    Vector v(Index(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) v[Index(j)] = r[cols[j]];
    return v;
}

std::vector<Column> resolve(const std::vector<std::string>& names) {
    if (names.empty()) throw std::invalid_argument("classical model needs at least one covariate");
    std::vector<Column> cols;
    for (const auto& n : names) cols.push_back(column_from_name(n));
    return cols;
}

RiskIntervalTable start_table(ClassicalKind kind, const std::vector<std::string>& covariates) {
    RiskIntervalTable t;
    t.kind = kind;
    t.covariate_names = covariates;
    return t;
}

void warn(RiskIntervalTable& t, std::string message) {
    log::warn(std::string(to_string(t.kind)) + ": " + message);
    t.warnings.push_back(std::move(message));
}

// Shared by AG and PWP: one row per non-empty interval.
RiskIntervalTable interval_rows(ClassicalKind kind, const RecordTable& records, const std::vector<std::string>& covariates,
                                Timescale timescale) {
    const auto cols = resolve(covariates);
    RiskIntervalTable t = start_table(kind, covariates);
    std::size_t dropped = 0;
    for (const auto& [id, rows] : records.by_patient()) {
        for (const Record* r : rows) {
            const double start = (*r)[Column::start], stop = (*r)[Column::stop];
            if (!(stop > start)) {
                ++dropped;
                continue;
            }
            RiskInterval row;
            row.patient_id = id;
            row.start = timescale == Timescale::gap ? 0.0 : start;
            row.stop = timescale == Timescale::gap ? stop - start : stop;
            row.event = r->status() == 1;
            row.covariates = covariate_values(*r, cols);
            row.stratum = kind == ClassicalKind::pwp ? r->interval() : 1;
            row.cluster = id;
            t.rows.push_back(std::move(row));
        }
    }
    if (dropped) warn(t, "dropped " + std::to_string(dropped) + " zero-length interval(s)");
    return t;
}

}  // namespace

std::string_view to_string(ClassicalKind kind) {
    switch (kind) {
        case ClassicalKind::cox: return "cox";
        case ClassicalKind::cox_interval: return "cox-interval";
        case ClassicalKind::ag: return "ag";
        case ClassicalKind::pwp: return "pwp";
        case ClassicalKind::wlw: return "wlw";
    }
    return "?";
}

ClassicalKind classical_kind_from_string(std::string_view name) {
    for (auto k : {ClassicalKind::cox, ClassicalKind::cox_interval, ClassicalKind::ag, ClassicalKind::pwp, ClassicalKind::wlw}) {
        if (to_string(k) == name) return k;
    }
    throw std::invalid_argument("unknown classical model '" + std::string(name) + "'");
}

std::vector<std::string> default_classical_covariates() { return {"treatment", "number", "size"}; }

CoxData RiskIntervalTable::to_cox_data() const {
    const Index n = Index(rows.size());
    if (n == 0) throw std::invalid_argument("risk interval table is empty");
    CoxData d;
    d.start.resize(n);
    d.stop.resize(n);
    d.x.resize(n, Index(covariate_names.size()));
    for (Index i = 0; i < n; ++i) {
        const RiskInterval& r = rows[std::size_t(i)];
        d.start[i] = r.start;
        d.stop[i] = r.stop;
        d.event.push_back(r.event);
        d.x.row(i) = r.covariates.transpose();
        d.strata.push_back(r.stratum);
        if (clustered) d.cluster.push_back(r.cluster);
    }
    return d;
}

std::size_t RiskIntervalTable::n_strata() const {
    std::set<int> s;
    for (const auto& r : rows) s.insert(r.stratum);
    return s.size();
}

std::size_t RiskIntervalTable::n_clusters() const {
    std::set<PatientId> s;
    for (const auto& r : rows) s.insert(r.cluster);
    return s.size();
}

RiskIntervalTable expand_ag(const RecordTable& records, const std::vector<std::string>& covariates) {
    return interval_rows(ClassicalKind::ag, records, covariates, Timescale::total);
}

RiskIntervalTable expand_pwp(const RecordTable& records, const std::vector<std::string>& covariates, Timescale timescale) {
    RiskIntervalTable t = interval_rows(ClassicalKind::pwp, records, covariates, timescale);
    std::map<int, std::size_t> events;
    for (const auto& r : t.rows) events[r.stratum] += r.event ? 1 : 0;
    std::vector<int> sparse;
    for (const auto& [k, e] : events) {
        if (e < 2) sparse.push_back(k);
    }
    if (!sparse.empty()) {
        std::string list;
        for (int k : sparse) list += (list.empty() ? "" : ",") + std::to_string(k);
        std::erase_if(t.rows, [&](const RiskInterval& r) {
            return std::find(sparse.begin(), sparse.end(), r.stratum) != sparse.end();
        });
        warn(t, "dropped strata with fewer than 2 events: " + list);
    }
    return t;
}

RiskIntervalTable expand_wlw(const RecordTable& records, const std::vector<std::string>& covariates, int max_order) {
    if (max_order < 1) throw std::invalid_argument("WLW needs K >= 1");
    const auto cols = resolve(covariates);
    RiskIntervalTable t = start_table(ClassicalKind::wlw, covariates);
    for (const auto& [id, rows] : records.by_patient()) {
        const double entry = (*rows.front())[Column::start];
        const double end = (*rows.back())[Column::stop] - entry;
        std::vector<double> event_times;
        for (const Record* r : rows) {
            if (r->status() == 1) event_times.push_back((*r)[Column::stop] - entry);
        }
        const Vector x = covariate_values(*rows.front(), cols);
        for (int k = 1; k <= max_order; ++k) {
            RiskInterval row;
            row.patient_id = id;
            row.start = kMinusInf;
            row.event = std::size_t(k) <= event_times.size();
            row.stop = row.event ? event_times[std::size_t(k - 1)] : end;
            row.covariates = x;
            row.stratum = k;
            row.cluster = id;
            t.rows.push_back(std::move(row));
        }
    }
    return t;
}

RiskIntervalTable expand_first_event(const RecordTable& records, const std::vector<std::string>& covariates) {
    const auto cols = resolve(covariates);
    RiskIntervalTable t = start_table(ClassicalKind::cox, covariates);
    EventMapping mapping;
    mapping.event_codes = {1};
    mapping.rule = OutcomeRule::first_event;
    const auto outcomes = derive_survival(records, mapping);
    const auto patients = records.by_patient();
    for (const auto& o : outcomes) {
        RiskInterval row;
        row.patient_id = o.patient_id;
        row.start = kMinusInf;
        row.stop = o.time;
        row.event = o.event;
        row.covariates = covariate_values(*patients.at(o.patient_id).front(), cols);
        row.stratum = 1;
        row.cluster = o.patient_id;
        t.rows.push_back(std::move(row));
    }
    return t;
}

RiskIntervalTable expand_per_interval(const RecordTable& records, const std::vector<std::string>& covariates) {
    const auto cols = resolve(covariates);
    RiskIntervalTable t = start_table(ClassicalKind::cox_interval, covariates);
    t.clustered = false;
    for (const auto& [id, rows] : records.by_patient()) {
        for (const Record* r : rows) {
            RiskInterval row;
            row.patient_id = id;
            row.start = kMinusInf;
            row.stop = (*r)[Column::stop] - (*r)[Column::start];
            row.event = r->status() == 1;
            row.covariates = covariate_values(*r, cols);
            row.stratum = 1;
            row.cluster = id;
            t.rows.push_back(std::move(row));
        }
    }
    return t;
}

RiskIntervalTable expand(ClassicalKind kind, const RecordTable& records, const std::vector<std::string>& covariates,
                         Timescale timescale, int wlw_order) {
    switch (kind) {
        case ClassicalKind::cox: return expand_first_event(records, covariates);
        case ClassicalKind::cox_interval: return expand_per_interval(records, covariates);
        case ClassicalKind::ag: return expand_ag(records, covariates);
        case ClassicalKind::pwp: return expand_pwp(records, covariates, timescale);
        case ClassicalKind::wlw: return expand_wlw(records, covariates, wlw_order);
    }
    throw std::logic_error("unhandled classical kind");
}

ClassicalFit fit_classical(const RiskIntervalTable& table, const CoxOptions& options) {
    ClassicalFit out;
    out.kind = table.kind;
    out.fit = fit_cox(table.to_cox_data(), options);
    out.n_strata = table.n_strata();
    out.n_clusters = table.n_clusters();
    out.covariate_names = table.covariate_names;
    for (const auto& w : table.warnings) out.fit.warnings.push_back(w);
    return out;
}

nlohmann::json summary_json(const ClassicalFit& fit) {
    nlohmann::json j = summary_json(fit.fit, fit.covariate_names);
    j["model_kind"] = to_string(fit.kind);
    j["n_strata"] = fit.n_strata;
    j["n_clusters"] = fit.n_clusters;
    j["warnings"] = fit.fit.warnings;
    return j;
}

}  // namespace seqcox
