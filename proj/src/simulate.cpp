#include "seqcox/simulate.hpp"

#include "seqcox/classical.hpp"
#include "seqcox/log.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace seqcox {

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::mt19937_64 patient_rng(std::uint64_t seed, std::size_t patient) {
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(patient)};
    return std::mt19937_64(seq);
}

}  // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("normal_quantile: p must lie in (0, 1)");
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

void validate(const SimConfig& cfg) {
    if (cfg.n_patients == 0) throw std::invalid_argument("simulate: n_patients must be positive");
    if (!(cfg.weibull_shape > 0) || !(cfg.weibull_scale > 0)) throw std::invalid_argument("simulate: Weibull shape and scale must be positive");
    if (!(cfg.binary_prob >= 0 && cfg.binary_prob <= 1)) throw std::invalid_argument("simulate: binary_prob must lie in [0, 1]");
    if (!(cfg.followup_sd >= 0) || !std::isfinite(cfg.followup_mean)) throw std::invalid_argument("simulate: invalid follow-up distribution");
    if (!(cfg.target_censoring >= 0 && cfg.target_censoring < 1)) throw std::invalid_argument("simulate: target_censoring must lie in [0, 1)");
    if (!std::isfinite(cfg.beta[0]) || !std::isfinite(cfg.beta[1])) throw std::invalid_argument("simulate: beta must be finite");
}

nlohmann::json to_json(const SimConfig& cfg) {
    return {{"n_patients", cfg.n_patients},     {"weibull_shape", cfg.weibull_shape},
            {"weibull_scale", cfg.weibull_scale}, {"beta", cfg.beta},
            {"binary_prob", cfg.binary_prob},   {"followup_mean", cfg.followup_mean},
            {"followup_sd", cfg.followup_sd},   {"target_censoring", cfg.target_censoring},
            {"seed", cfg.seed}};
}

RecordTable simulate_recurrent(const SimConfig& cfg) {
    validate(cfg);
    // Follow-up ~ N(mean, sd) restricted to (0, inf), drawn by inverting the
    // truncated CDF so that one uniform per patient is consumed.
    const double lower = cfg.followup_sd > 0 ? normal_cdf(-cfg.followup_mean / cfg.followup_sd) : 0.0;
    if (cfg.followup_sd == 0 ? cfg.followup_mean <= 0 : lower >= 1.0) {
        throw std::invalid_argument("simulate: follow-up distribution has no positive mass");
    }
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    std::exponential_distribution<double> expo;
    RecordTable table;
    for (std::size_t i = 0; i < cfg.n_patients; ++i) {
        auto rng = patient_rng(cfg.seed, i);
        const double x_cont = normal(rng);
        const double x_bin = unif(rng) < cfg.binary_prob ? 1.0 : 0.0;
        const double u = unif(rng);
        double followup = cfg.followup_mean;
        if (cfg.followup_sd > 0) {
            const double q = std::clamp(lower + u * (1.0 - lower), 1e-300, 1.0 - 1e-16);
            followup = std::max(cfg.followup_mean + cfg.followup_sd * normal_quantile(q), 1e-9);
        }
        const double eta = cfg.beta[0] * x_cont + cfg.beta[1] * x_bin;

        std::vector<double> events;
        double t = 0.0;
        for (;;) {
            const double gap = cfg.weibull_scale * std::pow(expo(rng) * std::exp(-eta), 1.0 / cfg.weibull_shape);
            if (t + gap >= followup) break;
            t += gap;
            events.push_back(t);
        }

        const auto pid = PatientId(i + 1);
        auto push = [&](double start, double stop, int status, int order) {
            Record r;
            r.patient_id = pid;
            r[Column::treatment] = 1.0 + x_bin;
            r[Column::number] = 1.0;
            r[Column::size] = x_cont;
            r[Column::recur] = double(events.size());
            r[Column::start] = start;
            r[Column::stop] = stop;
            r[Column::status] = status;
            r[Column::enumeration] = order;
            table.rows.push_back(r);
        };
        double prev = 0.0;
        int order = 1;
        for (double e : events) {
            push(prev, e, 1, order++);
            prev = e;
        }
        push(prev, followup, 0, order);
    }
    validate_records(table);
    return table;
}

double simulated_censoring(const RecordTable& table) {
    const auto patients = table.by_patient();
    if (patients.empty()) throw std::invalid_argument("simulated_censoring: empty table");
    std::size_t censored = 0;
    for (const auto& [id, rows] : patients) {
        bool any = false;
        for (const Record* r : rows) any = any || r->status() == 1;
        censored += any ? 0 : 1;
    }
    return double(censored) / double(patients.size());
}

double calibrate_followup(const SimConfig& cfg) {
    validate(cfg);
    SimConfig pilot = cfg;
    pilot.n_patients = 1000;
    auto censoring_at = [&](double mean) {
        pilot.followup_mean = mean;
        return simulated_censoring(simulate_recurrent(pilot));
    };
    // Censoring falls as the mean follow-up grows.
    double lo = 1e-3 * cfg.weibull_scale, hi = 1e3 * cfg.weibull_scale;
    const double c_lo = censoring_at(lo), c_hi = censoring_at(hi);
    const double target = cfg.target_censoring;
    if (std::abs(c_lo - target) <= 0.02) return lo;
    if (std::abs(c_hi - target) <= 0.02) return hi;
    if (target > c_lo || target < c_hi) {
        std::ostringstream os;
        os << "calibrate_followup: target censoring " << target << " outside achievable range [" << c_hi << ", " << c_lo
           << "]";
        throw std::invalid_argument(os.str());
    }
    for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        const double c = censoring_at(mid);
        if (std::abs(c - target) <= 0.02) return mid;
        (c > target ? lo : hi) = mid;
    }
    throw std::runtime_error("calibrate_followup: bisection did not reach the target");
}

nlohmann::json significance_report(const RecordTable& table) {
    const ClassicalFit fit = fit_classical(expand_ag(table, {"size", "treatment"}));
    nlohmann::json j = summary_json(fit);
    nlohmann::json significant = nlohmann::json::array();
    for (const auto& p : j["p"]) significant.push_back(p.get<double>() < 0.05);
    j["significant_at_0.05"] = significant;
    j["censoring"] = simulated_censoring(table);
    j["n_rows"] = table.rows.size();
    return j;
}

}  // namespace seqcox
