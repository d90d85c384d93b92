#include "seqcox/cox.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <set>

using namespace seqcox;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Log partial likelihood by direct enumeration of risk sets.
double oracle_loglik(const CoxData& d, const Vector& beta, Ties ties) {
    const Vector eta = d.x * beta;
    std::set<int> strata;
    for (Index i = 0; i < d.rows(); ++i) strata.insert(d.strata.empty() ? 0 : d.strata[std::size_t(i)]);
    double ll = 0.0;
    for (int s : strata) {
        auto in = [&](Index i) { return (d.strata.empty() ? 0 : d.strata[std::size_t(i)]) == s; };
        std::set<double> times;
        for (Index i = 0; i < d.rows(); ++i)
            if (in(i) && d.event[std::size_t(i)]) times.insert(d.stop[i]);
        for (double t : times) {
            double risk = 0.0, tied = 0.0;
            int n_tied = 0;
            for (Index i = 0; i < d.rows(); ++i) {
                if (!in(i)) continue;
                if (d.start[i] < t && t <= d.stop[i]) risk += std::exp(eta[i]);
                if (d.event[std::size_t(i)] && d.stop[i] == t) {
                    tied += std::exp(eta[i]);
                    ll += eta[i];
                    ++n_tied;
                }
            }
            for (int l = 0; l < n_tied; ++l) {
                const double frac = ties == Ties::efron ? double(l) / n_tied : 0.0;
                ll -= std::log(risk - frac * tied);
            }
        }
    }
    return ll;
}

// Maximiser of the one-parameter oracle by golden-section search.
double oracle_argmax(const CoxData& d, Ties ties, double lo, double hi) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    auto f = [&](double b) { return oracle_loglik(d, Vector::Constant(1, b), ties); };
    double a = hi - r * (hi - lo), b = lo + r * (hi - lo);
    while (hi - lo > 1e-10) {
        if (f(a) > f(b)) {
            hi = b;
        } else {
            lo = a;
        }
        a = hi - r * (hi - lo);
        b = lo + r * (hi - lo);
    }
    return 0.5 * (lo + hi);
}

double oracle_c_index(const Vector& risk, const Vector& time, const std::vector<bool>& event) {
    double num = 0.0, den = 0.0;
    for (Index i = 0; i < risk.size(); ++i)
        for (Index j = 0; j < risk.size(); ++j) {
            if (i == j || !event[std::size_t(i)]) continue;
            // i is the earlier member of the pair.
            const bool earlier = time[i] < time[j] || (time[i] == time[j] && !event[std::size_t(j)]);
            if (!earlier) continue;
            den += 1.0;
            if (risk[i] > risk[j]) num += 1.0;
            if (risk[i] == risk[j]) num += 0.5;
        }
    return num / den;
}

CoxData right_censored(const Vector& time, const std::vector<bool>& event, const Matrix& x) {
    CoxData d;
    d.start = Vector::Constant(time.size(), -kInf);
    d.stop = time;
    d.event = event;
    d.x = x;
    return d;
}

// Exponential times with hazard exp(x * beta) and uniform censoring.
CoxData simulated(Index n, const Vector& beta, std::uint64_t seed, double censor_max = 3.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::exponential_distribution<double> expo;
    std::uniform_real_distribution<double> unif(0.0, censor_max);
    Matrix x(n, beta.size());
    Vector time(n);
    std::vector<bool> event(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < beta.size(); ++j) x(i, j) = normal(rng);
        const double t = expo(rng) / std::exp(x.row(i).dot(beta));
        const double c = unif(rng);
        time[i] = std::min(t, c);
        event[std::size_t(i)] = t <= c;
    }
    return right_censored(time, event, x);
}

// Small data set with tied event times and a tie between an event and a censoring.
CoxData tied_example() {
    Vector time(8);
    time << 1, 1, 2, 2, 2, 3, 4, 4;
    Matrix x(8, 1);
    x << 1.2, 0.3, -0.5, 0.9, 0.1, -1.1, 0.4, -0.2;
    return right_censored(time, {true, true, true, false, true, true, true, false}, x);
}

}  // namespace

TEST_CASE("partial likelihood matches direct enumeration") {
    const CoxData d = tied_example();
    for (Ties ties : {Ties::efron, Ties::breslow}) {
        for (double b : {-1.0, 0.0, 0.7}) {
            const Vector beta = Vector::Constant(1, b);
            CHECK(partial_likelihood(d, beta, ties).loglik == doctest::Approx(oracle_loglik(d, beta, ties)).epsilon(1e-12));
        }
    }

    SUBCASE("counting process and strata") {
        CoxData cp = simulated(30, Vector::Constant(2, 0.4), 4);
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(0.0, 0.5);
        for (Index i = 0; i < cp.rows(); ++i) cp.start[i] = u(rng) * cp.stop[i];
        for (Index i = 0; i < cp.rows(); ++i) cp.strata.push_back(int(i % 3));
        Vector beta(2);
        beta << 0.3, -0.8;
        for (Ties ties : {Ties::efron, Ties::breslow}) {
            CHECK(partial_likelihood(cp, beta, ties).loglik == doctest::Approx(oracle_loglik(cp, beta, ties)).epsilon(1e-12));
        }
    }
}

TEST_CASE("score and information are the derivatives of the log likelihood") {
    CoxData d = simulated(25, Vector::Constant(2, 0.5), 9);
    d.stop = (d.stop * 4).array().round() / 4;  // create ties
    Vector beta(2);
    beta << 0.2, -0.4;
    for (Ties ties : {Ties::efron, Ties::breslow}) {
        const PartialLikelihood pl = partial_likelihood(d, beta, ties);
        for (Index j = 0; j < 2; ++j) {
            Matrix b = beta;
            const double num = test::central_difference([&] { return partial_likelihood(d, b, ties).loglik; }, b, j, 0);
            CHECK(test::relative_error(pl.score[j], num) < 1e-6);
            for (Index k = 0; k < 2; ++k) {
                const double dscore = test::central_difference([&] { return partial_likelihood(d, b, ties).score[k]; }, b, j, 0);
                CHECK(test::relative_error(pl.information(k, j), -dscore) < 1e-6);
            }
        }
    }
}

TEST_CASE("fit reaches the oracle maximiser") {
    const CoxData d = tied_example();
    for (Ties ties : {Ties::efron, Ties::breslow}) {
        CoxOptions o;
        o.ties = ties;
        const CoxFit fit = fit_cox(d, o);
        CHECK(fit.converged);
        CHECK(fit.beta[0] == doctest::Approx(oracle_argmax(d, ties, -10, 10)).epsilon(1e-6));
        CHECK(fit.log_partial_likelihood == doctest::Approx(oracle_loglik(d, fit.beta, ties)).epsilon(1e-12));
        CHECK(fit.null_log_partial_likelihood == doctest::Approx(oracle_loglik(d, Vector::Zero(1), ties)).epsilon(1e-12));
        CHECK(fit.aic == doctest::Approx(2.0 - 2.0 * fit.log_partial_likelihood));
        for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) CHECK(fit.loglik_trace[i] >= fit.loglik_trace[i - 1]);
    }
}

TEST_CASE("without ties Efron and Breslow agree") {
    const CoxData d = simulated(40, Vector::Constant(1, 1.0), 12);
    CoxOptions b;
    b.ties = Ties::breslow;
    const CoxFit e = fit_cox(d), br = fit_cox(d, b);
    CHECK(e.beta[0] == doctest::Approx(br.beta[0]).epsilon(1e-9));
    CHECK(e.log_partial_likelihood == doctest::Approx(br.log_partial_likelihood).epsilon(1e-12));
}

TEST_CASE("separation is flagged") {
    Vector time(6);
    time << 1, 2, 3, 4, 5, 6;
    Matrix x(6, 1);
    x << 6, 5, 4, 3, 2, 1;
    const CoxFit fit = fit_cox(right_censored(time, std::vector<bool>(6, true), x));
    CHECK(fit.separation);
    CHECK_FALSE(fit.warnings.empty());
    CHECK(fit.beta[0] > 3.0);
}

TEST_CASE("constant columns are aliased") {
    const CoxData base = simulated(30, Vector::Constant(1, 0.5), 13);
    CoxData d = base;
    d.x = Matrix::Constant(30, 1, 2.5);
    const CoxFit only = fit_cox(d);
    CHECK(only.aliased == std::vector<bool>{true});
    CHECK(only.beta[0] == 0.0);
    CHECK(only.c_index == 0.5);
    CHECK_FALSE(only.warnings.empty());

    d.x.conservativeResize(30, 2);
    d.x.col(1) = base.x.col(0);
    const CoxFit mixed = fit_cox(d);
    const CoxFit single = fit_cox(base);
    CHECK(mixed.beta[0] == 0.0);
    CHECK(mixed.beta[1] == doctest::Approx(single.beta[0]).epsilon(1e-10));
    CHECK(mixed.aic == doctest::Approx(single.aic + 2.0));
}

TEST_CASE("rescaling a covariate rescales its coefficient") {
    const CoxData d = simulated(60, Vector::Constant(2, 0.6), 14);
    CoxData scaled = d;
    scaled.x.col(0) *= 10.0;
    const CoxFit a = fit_cox(d), b = fit_cox(scaled);
    CHECK(b.beta[0] == doctest::Approx(a.beta[0] / 10.0).epsilon(1e-8));
    CHECK(b.beta[1] == doctest::Approx(a.beta[1]).epsilon(1e-8));
    CHECK(b.log_partial_likelihood == doctest::Approx(a.log_partial_likelihood).epsilon(1e-10));
    CHECK(b.c_index == a.c_index);
}

TEST_CASE("concordance index") {
    std::mt19937_64 rng(15);
    std::uniform_int_distribution<int> t(1, 6), r(0, 4);
    std::bernoulli_distribution e(0.6);
    Vector time(40), risk(40);
    std::vector<bool> event(40);
    for (Index i = 0; i < 40; ++i) {
        time[i] = t(rng);
        risk[i] = r(rng);
        event[std::size_t(i)] = e(rng);
    }
    const double c = concordance_index(risk, time, event);
    CHECK(c == doctest::Approx(oracle_c_index(risk, time, event)).epsilon(1e-14));
    CHECK(c + concordance_index(-risk, time, event) == doctest::Approx(1.0).epsilon(1e-14));

    Vector t3(3), r3(3);
    t3 << 1, 2, 3;
    r3 << 3, 2, 1;
    CHECK(concordance_index(r3, t3, {true, true, true}) == 1.0);
    CHECK(concordance_index(-r3, t3, {true, true, true}) == 0.0);
    CHECK(concordance_index(Vector::Zero(3), t3, {true, true, true}) == 0.5);
    CHECK_THROWS(concordance_index(r3, t3, {false, false, false}));
}

TEST_CASE("score residuals sum to the score") {
    CoxData d = simulated(30, Vector::Constant(2, 0.5), 16);
    d.stop = (d.stop * 3).array().round() / 3;
    Vector beta(2);
    beta << 0.4, -0.2;
    for (Ties ties : {Ties::efron, Ties::breslow}) {
        const Matrix res = score_residuals(d, beta, ties);
        CHECK(res.rows() == 30);
        const Vector total = res.colwise().sum().transpose();
        CHECK((total - partial_likelihood(d, beta, ties).score).norm() < 1e-12);
    }
}

TEST_CASE("cluster-robust covariance") {
    CoxData d = simulated(40, Vector::Constant(2, 0.5), 17);
    for (Index i = 0; i < d.rows(); ++i) d.cluster.push_back(i / 3);
    const CoxFit fit = fit_cox(d);
    REQUIRE(fit.robust);

    // Sandwich built from residuals summed within clusters.
    const Matrix res = score_residuals(d, fit.beta, Ties::efron);
    std::map<std::int64_t, Vector> by_cluster;
    for (Index i = 0; i < d.rows(); ++i) {
        auto [it, fresh] = by_cluster.try_emplace(d.cluster[std::size_t(i)], Vector::Zero(2));
        it->second += res.row(i).transpose();
    }
    Matrix meat = Matrix::Zero(2, 2);
    for (const auto& [id, u] : by_cluster) meat += u * u.transpose();
    const Matrix expected = fit.model_covariance * meat * fit.model_covariance;
    CHECK((fit.covariance - expected).norm() < 1e-10 * expected.norm());

    SUBCASE("singleton clusters approach the model variance in large samples") {
        CoxData big = simulated(6000, Vector::Constant(1, 0.5), 18);
        for (Index i = 0; i < big.rows(); ++i) big.cluster.push_back(i);
        const CoxFit f = fit_cox(big);
        CHECK(f.covariance(0, 0) / f.model_covariance(0, 0) == doctest::Approx(1.0).epsilon(0.1));
    }
}

TEST_CASE("large-sample fit recovers the generating coefficients") {
    Vector beta(2);
    beta << 1.0, -0.5;
    const CoxFit fit = fit_cox(simulated(3000, beta, 19));
    const Vector se = fit.standard_errors();
    for (Index j = 0; j < 2; ++j) CHECK(std::abs(fit.beta[j] - beta[j]) < 4.0 * se[j]);
    CHECK(fit.c_index > 0.6);
}

TEST_CASE("input checks") {
    CoxData d = tied_example();
    d.event.pop_back();
    CHECK_THROWS(fit_cox(d));
    CoxData no_events = tied_example();
    no_events.event.assign(8, false);
    CHECK_THROWS(fit_cox(no_events));
    CoxData bad = tied_example();
    bad.start[0] = 5.0;
    CHECK_THROWS(fit_cox(bad));
}

TEST_CASE("Breslow baseline hazard with beta zero is Nelson-Aalen") {
    Vector time(4);
    time << 1, 2, 2, 3;
    const CoxData d = right_censored(time, {true, true, false, true}, Matrix::Zero(4, 1));
    const BaselineHazard h = breslow_baseline(d, Vector::Zero(1));
    REQUIRE(h.times == std::vector<double>{1, 2, 3});
    CHECK(h.cumulative_hazard[0] == doctest::Approx(1.0 / 4));
    CHECK(h.cumulative_hazard[1] == doctest::Approx(1.0 / 4 + 1.0 / 3));
    CHECK(h.cumulative_hazard[2] == doctest::Approx(1.0 / 4 + 1.0 / 3 + 1.0));
}
