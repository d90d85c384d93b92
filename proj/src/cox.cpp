#include "seqcox/cox.hpp"

#include "seqcox/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace seqcox {

std::string_view to_string(Ties ties) { return ties == Ties::efron ? "efron" : "breslow"; }

Ties ties_from_string(std::string_view name) {
    if (name == "efron") return Ties::efron;
    if (name == "breslow") return Ties::breslow;
    throw std::invalid_argument("unknown ties method '" + std::string(name) + "'");
}

void CoxData::check() const {
    const Index n = x.rows();
    if (start.size() != n || stop.size() != n || Index(event.size()) != n) {
        throw std::invalid_argument("cox data: start, stop, event and x must have the same number of rows");
    }
    if (!strata.empty() && Index(strata.size()) != n) throw std::invalid_argument("cox data: strata length mismatch");
    if (!cluster.empty() && Index(cluster.size()) != n) throw std::invalid_argument("cox data: cluster length mismatch");
    if (n < 2) throw std::invalid_argument("cox data: need at least 2 rows");
    if (!x.allFinite()) throw std::invalid_argument("cox data: features must be finite");
    for (Index i = 0; i < n; ++i) {
        if (std::isnan(start[i]) || !std::isfinite(stop[i]) || !(start[i] < stop[i] || std::isinf(start[i]))) {
            throw std::invalid_argument("cox data: row " + std::to_string(i) + " needs start < stop");
        }
    }
}

CoxData make_cox_data(const Matrix& features, const std::vector<SurvivalOutcome>& outcomes) {
    if (Index(outcomes.size()) != features.rows()) {
        throw std::invalid_argument("features have " + std::to_string(features.rows()) + " rows but there are " +
                                    std::to_string(outcomes.size()) + " outcomes");
    }
    CoxData d;
    const Index n = features.rows();
    d.start = Vector::Constant(n, -std::numeric_limits<double>::infinity());
    d.stop.resize(n);
    d.x = features;
    for (Index i = 0; i < n; ++i) {
        d.stop[i] = outcomes[std::size_t(i)].time;
        d.event.push_back(outcomes[std::size_t(i)].event);
    }
    return d;
}

namespace {

/// Risk set and tied events at one distinct event time within one stratum.
struct EventGroup {
    std::vector<Index> risk;
    std::vector<Index> deaths;
};

std::vector<EventGroup> event_groups(const CoxData& d) {
    std::map<int, std::vector<Index>> by_stratum;
    for (Index i = 0; i < d.rows(); ++i) by_stratum[d.strata.empty() ? 0 : d.strata[std::size_t(i)]].push_back(i);

    std::vector<EventGroup> groups;
    for (const auto& [s, rows] : by_stratum) {
        std::vector<double> times;
        for (Index i : rows) {
            if (d.event[std::size_t(i)]) times.push_back(d.stop[i]);
        }
        std::sort(times.begin(), times.end());
        times.erase(std::unique(times.begin(), times.end()), times.end());
        for (double t : times) {
            EventGroup g;
            for (Index i : rows) {
                if (d.start[i] < t && t <= d.stop[i]) {
                    g.risk.push_back(i);
                    if (d.event[std::size_t(i)] && d.stop[i] == t) g.deaths.push_back(i);
                }
            }
            groups.push_back(std::move(g));
        }
    }
    return groups;
}

double efron_fraction(Ties ties, std::size_t l, std::size_t d) {
    return ties == Ties::efron ? double(l) / double(d) : 0.0;
}

struct Evaluation {
    PartialLikelihood pl;
    Matrix residuals;
};

Evaluation evaluate(const CoxData& d, const std::vector<EventGroup>& groups, const Vector& beta, Ties ties,
                    bool want_residuals) {
    const Index p = d.x.cols();
    const Vector eta = d.x * beta;
    const double shift = eta.size() ? eta.maxCoeff() : 0.0;
    const Vector r = (eta.array() - shift).exp();

    Evaluation ev;
    ev.pl.loglik = 0.0;
    ev.pl.score = Vector::Zero(p);
    ev.pl.information = Matrix::Zero(p, p);
    if (want_residuals) ev.residuals = Matrix::Zero(d.rows(), p);

    for (const EventGroup& g : groups) {
        double s0 = 0.0, d0 = 0.0;
        Vector s1 = Vector::Zero(p), d1 = Vector::Zero(p);
        Matrix s2 = Matrix::Zero(p, p), d2 = Matrix::Zero(p, p);
        for (Index i : g.risk) {
            const auto xi = d.x.row(i).transpose();
            s0 += r[i];
            s1 += r[i] * xi;
            s2.noalias() += r[i] * xi * xi.transpose();
        }
        for (Index i : g.deaths) {
            const auto xi = d.x.row(i).transpose();
            d0 += r[i];
            d1 += r[i] * xi;
            d2.noalias() += r[i] * xi * xi.transpose();
            ev.pl.loglik += eta[i];
            ev.pl.score += xi;
        }
        const std::size_t nd = g.deaths.size();
        for (std::size_t l = 0; l < nd; ++l) {
            const double f = efron_fraction(ties, l, nd);
            const double den = s0 - f * d0;
            const Vector m1 = s1 - f * d1;
            const Matrix m2 = s2 - f * d2;
            const Vector xbar = m1 / den;
            ev.pl.loglik -= std::log(den) + shift;
            ev.pl.score -= xbar;
            ev.pl.information += m2 / den - xbar * xbar.transpose();

            if (want_residuals) {
                for (Index i : g.risk) {
                    const bool dead = std::find(g.deaths.begin(), g.deaths.end(), i) != g.deaths.end();
                    const auto diff = d.x.row(i) - xbar.transpose();
                    const double weight = dead ? 1.0 - f : 1.0;
                    ev.residuals.row(i) -= (weight * r[i] / den) * diff;
                    if (dead) ev.residuals.row(i) += diff / double(nd);
                }
            }
        }
    }
    return ev;
}

Matrix safe_inverse(const Matrix& m) {
    Eigen::LDLT<Matrix> ldlt(m);
    Matrix inv = ldlt.solve(Matrix::Identity(m.rows(), m.cols()));
    if (!inv.allFinite()) {
        inv = m.completeOrthogonalDecomposition().pseudoInverse();
    }
    return 0.5 * (inv + inv.transpose());
}

}  // namespace

PartialLikelihood partial_likelihood(const CoxData& data, const Vector& beta, Ties ties) {
    data.check();
    if (beta.size() != data.x.cols()) throw std::invalid_argument("beta length does not match feature count");
    return evaluate(data, event_groups(data), beta, ties, false).pl;
}

Matrix score_residuals(const CoxData& data, const Vector& beta, Ties ties) {
    data.check();
    return evaluate(data, event_groups(data), beta, ties, true).residuals;
}

Vector CoxFit::standard_errors() const { return covariance.diagonal().cwiseMax(0.0).cwiseSqrt(); }

Vector linear_predictor(const Matrix& x, const Vector& beta) { return x * beta; }

CoxFit fit_cox(const CoxData& data, const CoxOptions& options) {
    data.check();
    if (options.max_iter < 1 || options.max_halvings < 0 || !(options.tol > 0) || options.ridge < 0) {
        throw std::invalid_argument("invalid cox options");
    }
    const Index p_all = data.x.cols();
    CoxFit fit;
    fit.ties = options.ties;
    fit.n = std::size_t(data.rows());
    fit.n_events = std::size_t(std::count(data.event.begin(), data.event.end(), true));
    if (fit.n_events == 0) throw std::invalid_argument("cox fit: no events");

    std::vector<Index> active;
    fit.aliased.assign(std::size_t(p_all), false);
    for (Index j = 0; j < p_all; ++j) {
        if (data.x.col(j).maxCoeff() == data.x.col(j).minCoeff()) {
            fit.aliased[std::size_t(j)] = true;
            fit.warnings.push_back("column " + std::to_string(j) + " is constant; coefficient fixed at 0");
        } else {
            active.push_back(j);
        }
    }

    CoxData reduced = data;
    reduced.x.resize(data.rows(), Index(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) reduced.x.col(Index(k)) = data.x.col(active[k]);
    const Index p = reduced.x.cols();
    const auto groups = event_groups(reduced);

    auto penalised = [&](const PartialLikelihood& pl, const Vector& b) {
        return pl.loglik - 0.5 * options.ridge * b.squaredNorm();
    };

    Vector beta = Vector::Zero(p);
    PartialLikelihood pl = evaluate(reduced, groups, beta, options.ties, false).pl;
    fit.null_log_partial_likelihood = pl.loglik;
    double objective = penalised(pl, beta);
    fit.loglik_trace.push_back(objective);

    for (int iter = 0; iter <= options.max_iter; ++iter) {
        const Vector grad = pl.score - options.ridge * beta;
        if (p == 0 || grad.cwiseAbs().maxCoeff() < options.tol) {
            fit.converged = true;
            break;
        }
        if (iter == options.max_iter) {
            fit.warnings.push_back("no convergence after " + std::to_string(options.max_iter) + " iterations");
            break;
        }
        const Matrix hess = pl.information + options.ridge * Matrix::Identity(p, p);
        Vector step = hess.ldlt().solve(grad);
        if (!step.allFinite()) step = hess.completeOrthogonalDecomposition().solve(grad);
        if (!step.allFinite()) {
            fit.warnings.push_back("singular information matrix");
            break;
        }

        bool accepted = false;
        for (int h = 0; h <= options.max_halvings; ++h) {
            const Vector trial = beta + step;
            PartialLikelihood next = evaluate(reduced, groups, trial, options.ties, false).pl;
            const double trial_objective = penalised(next, trial);
            if (std::isfinite(trial_objective) && trial_objective >= objective - 1e-12 * (1.0 + std::abs(objective))) {
                beta = trial;
                pl = std::move(next);
                objective = trial_objective;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if (!accepted) {
            fit.warnings.push_back("step halving exhausted at iteration " + std::to_string(iter + 1));
            break;
        }
        ++fit.iterations;
        fit.loglik_trace.push_back(objective);
    }

    const Matrix hess = pl.information + options.ridge * Matrix::Identity(p, p);
    const Matrix inv = p ? safe_inverse(hess) : Matrix(0, 0);

    // A coefficient that still moves by a unit-scale Newton step after the
    // score has vanished is running off to infinity.
    if (p > 0) {
        const Vector pending = inv * (pl.score - options.ridge * beta);
        for (Index j = 0; j < p; ++j) {
            Eigen::ArrayXd col = reduced.x.col(j).array();
            const double sd = std::sqrt((col - col.mean()).square().mean());
            const bool diverged = std::abs(beta[j] * sd) > 50.0;
            const bool drifting = std::abs(pending[j]) > 1e-3 * std::max(1.0, std::abs(beta[j]));
            if (diverged || drifting) fit.separation = true;
        }
        if (fit.separation) fit.warnings.push_back("monotone likelihood: a coefficient appears to diverge");
    }

    fit.beta = Vector::Zero(p_all);
    fit.model_covariance = Matrix::Zero(p_all, p_all);
    for (std::size_t a = 0; a < active.size(); ++a) {
        fit.beta[active[a]] = beta[Index(a)];
        for (std::size_t b = 0; b < active.size(); ++b) fit.model_covariance(active[a], active[b]) = inv(Index(a), Index(b));
    }
    fit.covariance = fit.model_covariance;

    if (!data.cluster.empty() && p > 0) {
        const Matrix resid = evaluate(reduced, groups, beta, options.ties, true).residuals;
        std::map<std::int64_t, Vector> per_cluster;
        for (Index i = 0; i < reduced.rows(); ++i) {
            auto [it, fresh] = per_cluster.try_emplace(data.cluster[std::size_t(i)], Vector::Zero(p));
            it->second += resid.row(i).transpose();
        }
        Matrix meat = Matrix::Zero(p, p);
        for (const auto& [id, u] : per_cluster) meat.noalias() += u * u.transpose();
        Matrix robust = inv * meat * inv;
        robust = 0.5 * (robust + robust.transpose());
        fit.covariance.setZero();
        for (std::size_t a = 0; a < active.size(); ++a)
            for (std::size_t b = 0; b < active.size(); ++b) fit.covariance(active[a], active[b]) = robust(Index(a), Index(b));
        fit.robust = true;
    }

    fit.log_partial_likelihood = pl.loglik;
    fit.aic = 2.0 * double(p_all) - 2.0 * fit.log_partial_likelihood;
    try {
        fit.c_index = concordance_index(linear_predictor(data.x, fit.beta), data.stop, data.event);
    } catch (const std::invalid_argument&) {
        fit.c_index = 0.5;
        fit.warnings.push_back("no comparable pairs for the concordance index");
    }
    for (const auto& w : fit.warnings) log::warn("cox: " + w);
    return fit;
}

CoxFit fit_cox(const Matrix& features, const std::vector<SurvivalOutcome>& outcomes, const CoxOptions& options) {
    return fit_cox(make_cox_data(features, outcomes), options);
}

double concordance_index(const Vector& risk, const Vector& time, const std::vector<bool>& event) {
    const Index n = risk.size();
    if (time.size() != n || Index(event.size()) != n) throw std::invalid_argument("concordance: length mismatch");
    double concordant = 0.0;
    double comparable = 0.0;
    for (Index i = 0; i < n; ++i) {
        if (!event[std::size_t(i)]) continue;
        for (Index j = 0; j < n; ++j) {
            if (i == j) continue;
            const bool later = time[j] > time[i] || (time[j] == time[i] && !event[std::size_t(j)]);
            if (!later) continue;
            comparable += 1.0;
            if (risk[i] > risk[j]) concordant += 1.0;
            else if (risk[i] == risk[j]) concordant += 0.5;
        }
    }
    if (comparable == 0.0) throw std::invalid_argument("concordance: no comparable pairs");
    return concordant / comparable;
}

double concordance_index(const Vector& risk, const std::vector<SurvivalOutcome>& outcomes) {
    Vector time(Index(outcomes.size()));
    std::vector<bool> event;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        time[Index(i)] = outcomes[i].time;
        event.push_back(outcomes[i].event);
    }
    return concordance_index(risk, time, event);
}

BaselineHazard breslow_baseline(const CoxData& data, const Vector& beta) {
    data.check();
    CoxData single = data;
    single.strata.clear();
    const Vector r = (data.x * beta).array().exp();
    BaselineHazard out;
    double cum = 0.0;
    std::vector<double> times;
    for (Index i = 0; i < data.rows(); ++i) {
        if (data.event[std::size_t(i)]) times.push_back(data.stop[i]);
    }
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    for (const EventGroup& g : event_groups(single)) {
        double s0 = 0.0;
        for (Index i : g.risk) s0 += r[i];
        cum += double(g.deaths.size()) / s0;
        out.cumulative_hazard.push_back(cum);
    }
    out.times = std::move(times);
    return out;
}

nlohmann::json summary_json(const CoxFit& fit, const std::vector<std::string>& names) {
    const Vector se = fit.standard_errors();
    nlohmann::json beta = nlohmann::json::array(), sej = nlohmann::json::array(), z = nlohmann::json::array(),
                   p = nlohmann::json::array();
    for (Index j = 0; j < fit.beta.size(); ++j) {
        beta.push_back(fit.beta[j]);
        sej.push_back(se[j]);
        const double zj = se[j] > 0 ? fit.beta[j] / se[j] : 0.0;
        z.push_back(zj);
        p.push_back(std::erfc(std::abs(zj) / std::sqrt(2.0)));
    }
    nlohmann::json out = {{"beta", beta},
                          {"se", sej},
                          {"z", z},
                          {"p", p},
                          {"c_index", fit.c_index},
                          {"aic", fit.aic},
                          {"log_partial_likelihood", fit.log_partial_likelihood},
                          {"n", fit.n},
                          {"n_events", fit.n_events},
                          {"converged", fit.converged},
                          {"iterations", fit.iterations},
                          {"ties", to_string(fit.ties)},
                          {"robust_variance", fit.robust},
                          {"separation_warning", fit.separation}};
    if (!names.empty()) out["names"] = names;
    return out;
}

}  // namespace seqcox
