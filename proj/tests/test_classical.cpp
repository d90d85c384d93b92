#include "seqcox/classical.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace seqcox;

namespace {

const std::filesystem::path kBladder = std::filesystem::path(SEQCOX_DATA_DIR) / "bladder1.csv";

RecordTable parse(const std::string& body) {
    RecordTable t = parse_records("id,treatment,number,size,recur,start,stop,status,rtumor,rsize,enum\n" + body);
    validate_records(t);
    return t;
}

// Patient 1 has two recurrences, 2 dies, 3 has a zero-length trailing interval, 4 is censored.
RecordTable small_table() {
    return parse(
        "1,placebo,1,3,2,0,5,1,1,1,1\n1,placebo,1,3,2,5,12,1,1,1,2\n1,placebo,1,3,2,12,20,0,0,0,3\n"
        "2,thiotepa,2,1,0,0,8,2,0,0,1\n"
        "3,placebo,1,2,1,0,3,1,1,1,1\n3,placebo,1,2,1,3,3,0,0,0,2\n"
        "4,thiotepa,3,1,0,0,10,0,0,0,1\n");
}

RecordTable bladder() {
    RecordTable t = load_records(kBladder);
    validate_records(t);
    return t;
}

const std::vector<std::string> kCov = {"treatment", "size"};

}  // namespace

TEST_CASE("Andersen-Gill rows") {
    const RiskIntervalTable t = expand_ag(small_table(), kCov);
    REQUIRE(t.rows.size() == 6);
    CHECK(t.warnings.size() == 1);
    CHECK(t.rows[1].start == 5.0);
    CHECK(t.rows[1].stop == 12.0);
    CHECK(t.rows[1].event);
    CHECK_FALSE(t.rows[3].event);  // death is not a recurrence
    CHECK(t.n_clusters() == 4);
    CHECK(t.n_strata() == 1);
    CHECK(t.rows[0].covariates[0] == 1.0);
    CHECK(t.rows[0].covariates[1] == 3.0);
}

TEST_CASE("PWP rows") {
    const RiskIntervalTable total = expand_pwp(small_table(), kCov);
    // Only the first-order stratum has two events.
    CHECK(total.n_strata() == 1);
    CHECK(total.rows.size() == 4);
    CHECK_FALSE(total.warnings.empty());

    const RecordTable b = bladder();
    const RiskIntervalTable tot = expand_pwp(b, kCov, Timescale::total);
    const RiskIntervalTable gap = expand_pwp(b, kCov, Timescale::gap);
    REQUIRE(tot.rows.size() == gap.rows.size());
    for (std::size_t i = 0; i < tot.rows.size(); ++i) {
        CHECK(gap.rows[i].stratum == tot.rows[i].stratum);
        CHECK(gap.rows[i].stop - gap.rows[i].start == doctest::Approx(tot.rows[i].stop - tot.rows[i].start));
        if (tot.rows[i].stratum == 1) {
            CHECK(gap.rows[i].start == tot.rows[i].start);
            CHECK(gap.rows[i].stop == tot.rows[i].stop);
        }
    }
}

TEST_CASE("WLW rows") {
    const RiskIntervalTable t = expand_wlw(small_table(), kCov, 4);
    REQUIRE(t.rows.size() == 16);
    CHECK(t.n_strata() == 4);
    auto row = [&](PatientId id, int k) {
        return *std::find_if(t.rows.begin(), t.rows.end(),
                             [&](const RiskInterval& r) { return r.patient_id == id && r.stratum == k; });
    };
    CHECK(row(1, 1).stop == 5.0);
    CHECK(row(1, 1).event);
    CHECK(row(1, 2).stop == 12.0);
    CHECK(row(1, 2).event);
    CHECK(row(1, 3).stop == 20.0);
    CHECK_FALSE(row(1, 3).event);
    CHECK(row(2, 4).stop == 8.0);
    CHECK(row(3, 2).stop == 3.0);
    CHECK_FALSE(row(3, 2).event);
    CHECK(std::isinf(row(4, 1).start));
    CHECK_THROWS(expand_wlw(small_table(), kCov, 0));
}

TEST_CASE("first-event and per-interval rows") {
    const RiskIntervalTable first = expand_first_event(small_table(), kCov);
    REQUIRE(first.rows.size() == 4);
    CHECK(first.rows[0].stop == 5.0);
    CHECK(first.rows[0].event);
    CHECK(first.rows[1].stop == 8.0);
    CHECK_FALSE(first.rows[1].event);

    const RiskIntervalTable per = expand_per_interval(small_table(), kCov);
    CHECK(per.rows.size() == 7);
    CHECK_FALSE(per.clustered);
    CHECK(per.rows[1].stop == 7.0);
}

TEST_CASE("bladder row counts") {
    const RecordTable b = bladder();
    const auto cov = default_classical_covariates();
    CHECK(expand_ag(b, cov).rows.size() == 292);
    CHECK(expand_wlw(b, cov, 4).rows.size() == 4 * 118);
    CHECK(expand_first_event(b, cov).rows.size() == 118);
    CHECK(expand_per_interval(b, cov).rows.size() == 294);
    for (ClassicalKind kind : {ClassicalKind::cox, ClassicalKind::cox_interval, ClassicalKind::ag, ClassicalKind::pwp,
                               ClassicalKind::wlw}) {
        CAPTURE(to_string(kind));
        const ClassicalFit fit = fit_classical(expand(kind, b, cov));
        CHECK(fit.fit.converged);
        CHECK(std::isfinite(fit.fit.aic));
        CHECK(classical_kind_from_string(to_string(kind)) == kind);
        const auto j = summary_json(fit);
        CHECK(j.at("model_kind") == to_string(kind));
    }
}

TEST_CASE("models collapse to the Cox model with one interval per patient") {
    // Keep only each bladder patient's first interval.
    RecordTable b = bladder();
    RecordTable single;
    single.rows.clear();
    for (const auto& [id, rows] : b.by_patient()) single.rows.push_back(*rows.front());
    validate_records(single);
    const auto cov = default_classical_covariates();

    const CoxFit ag = fit_classical(expand_ag(single, cov)).fit;
    const CoxFit pwp = fit_classical(expand_pwp(single, cov)).fit;
    const CoxFit first = fit_classical(expand_first_event(single, cov)).fit;
    const CoxFit wlw1 = fit_classical(expand_wlw(single, cov, 1)).fit;
    for (const CoxFit* f : {&pwp, &first, &wlw1}) {
        CHECK((f->beta - ag.beta).norm() < 1e-9);
        CHECK(f->log_partial_likelihood == doctest::Approx(ag.log_partial_likelihood).epsilon(1e-12));
        CHECK((f->covariance - ag.covariance).norm() < 1e-9);
    }
}

TEST_CASE("fits do not depend on record order") {
    const RecordTable b = bladder();
    RecordTable reversed = b;
    std::reverse(reversed.rows.begin(), reversed.rows.end());
    const auto cov = default_classical_covariates();
    for (ClassicalKind kind : {ClassicalKind::ag, ClassicalKind::pwp, ClassicalKind::wlw}) {
        const CoxFit a = fit_classical(expand(kind, b, cov)).fit;
        const CoxFit r = fit_classical(expand(kind, reversed, cov)).fit;
        CHECK((a.beta - r.beta).norm() < 1e-10);
        CHECK(a.aic == doctest::Approx(r.aic).epsilon(1e-12));
    }
}

TEST_CASE("unknown covariates and kinds are rejected") {
    CHECK_THROWS(expand_ag(small_table(), {"height"}));
    CHECK_THROWS(classical_kind_from_string("cox-ph"));
}
