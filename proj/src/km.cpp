#include "seqcox/km.hpp"

#include "seqcox/log.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace seqcox {

double SurvCurve::at(double t) const {
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return 1.0;
    return survival[std::size_t(it - times.begin()) - 1];
}

SurvCurve kaplan_meier(const std::vector<SurvivalOutcome>& outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("kaplan_meier: no subjects");
    std::map<double, std::pair<std::size_t, std::size_t>> table;  // time -> (events, leaving)
    for (const auto& o : outcomes) {
        auto& cell = table[o.time];
        cell.first += o.event ? 1 : 0;
        cell.second += 1;
    }
    SurvCurve curve;
    std::size_t at_risk = outcomes.size();
    double s = 1.0;
    for (const auto& [t, cell] : table) {
        if (cell.first > 0) {
            s *= 1.0 - double(cell.first) / double(at_risk);
            curve.times.push_back(t);
            curve.survival.push_back(s);
            curve.at_risk.push_back(at_risk);
            curve.events.push_back(cell.first);
        }
        at_risk -= cell.second;
    }
    return curve;
}

double chi2_1df_upper(double x) {
    if (!(x > 0.0)) return 1.0;
    return std::erfc(std::sqrt(x / 2.0));
}

LogRank logrank_test(const std::vector<SurvivalOutcome>& group_a, const std::vector<SurvivalOutcome>& group_b) {
    if (group_a.empty() || group_b.empty()) throw std::invalid_argument("logrank: both groups must be nonempty");
    // time -> {events A, events B, leaving A, leaving B}
    std::map<double, std::array<double, 4>> table;
    for (const auto& o : group_a) {
        auto& c = table[o.time];
        c[0] += o.event;
        c[2] += 1;
    }
    for (const auto& o : group_b) {
        auto& c = table[o.time];
        c[1] += o.event;
        c[3] += 1;
    }
    LogRank out;
    double n_a = double(group_a.size()), n_b = double(group_b.size());
    double total_events = 0.0;
    for (const auto& [t, c] : table) {
        const double d = c[0] + c[1];
        const double n = n_a + n_b;
        if (d > 0) {
            out.observed_a += c[0];
            out.expected_a += d * n_a / n;
            if (n > 1) out.variance += d * (n_a / n) * (n_b / n) * (n - d) / (n - 1);
            total_events += d;
        }
        n_a -= c[2];
        n_b -= c[3];
    }
    if (total_events == 0) throw std::invalid_argument("logrank: no events in either group");
    const double diff = out.observed_a - out.expected_a;
    out.chi2 = out.variance > 0 ? diff * diff / out.variance : 0.0;
    out.p = chi2_1df_upper(out.chi2);
    return out;
}

RiskGroups risk_groups(const Vector& scores) {
    if (scores.size() == 0) throw std::invalid_argument("risk_groups: no scores");
    std::vector<double> sorted(scores.data(), scores.data() + scores.size());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    RiskGroups g;
    g.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    g.degenerate = sorted.front() == sorted.back();
    for (Index i = 0; i < scores.size(); ++i) g.labels.push_back(scores[i] > g.median ? 1 : 0);
    if (g.degenerate) log::warn("risk_groups: all risk scores are equal; every subject is low risk");
    return g;
}

std::string format_km_rows(const SurvCurve& curve, const std::string& group) {
    std::ostringstream os;
    for (std::size_t i = 0; i < curve.times.size(); ++i) {
        char t[32], s[32];
        *std::to_chars(t, t + 31, curve.times[i]).ptr = '\0';
        *std::to_chars(s, s + 31, curve.survival[i]).ptr = '\0';
        os << t << ',' << s << ',' << curve.at_risk[i] << ',' << curve.events[i] << ',' << group << '\n';
    }
    return os.str();
}

}  // namespace seqcox
