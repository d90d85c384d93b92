#include "seqcox/explain.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace seqcox {

ScalarModel encoder_scalar_model(const EncoderModel& model) {
    return [&model](const Matrix& flat) {
        const auto f = Index(model.dims().features);
        if (f == 0 || flat.cols() % f != 0) throw std::invalid_argument("flattened input width is not a multiple of F");
        std::vector<Matrix> steps;
        for (Index t = 0; t < flat.cols() / f; ++t) steps.push_back(flat.middleCols(t * f, f));
        return Vector(predict(model, steps).col(0));
    };
}

Matrix flatten(const SequenceTensor& seq) {
    const Index n = Index(seq.n()), width = Index(seq.steps() * seq.features());
    return Eigen::Map<const RowMatrix>(seq.data.values().data(), n, width);
}

std::vector<std::string> flat_feature_names(const std::vector<std::string>& features, std::size_t steps) {
    std::vector<std::string> out;
    for (std::size_t t = 0; t < steps; ++t)
        for (const auto& f : features) out.push_back(f + "_t" + std::to_string(t));
    return out;
}

nlohmann::json Explanation::to_json() const {
    nlohmann::json w = nlohmann::json::object();
    for (std::size_t j = 0; j < names.size(); ++j) w[names[j]] = weights[Index(j)];
    return {{"sample_id", sample_id}, {"feature_weights", w}, {"intercept", intercept}, {"local_fit_r2", local_fit_r2}};
}

Explanation lime_explain(const ScalarModel& model, const Vector& x, const Matrix& background,
                         const std::vector<std::string>& names, const LimeConfig& cfg, std::size_t sample_id) {
    const Index p = x.size();
    if (cfg.n_samples < 10) throw std::invalid_argument("lime: n_samples must be at least 10");
    if (background.rows() == 0) throw std::invalid_argument("lime: background is empty");
    if (background.cols() != p || Index(names.size()) != p) throw std::invalid_argument("lime: width mismatch");
    if (!(cfg.ridge_lambda >= 0)) throw std::invalid_argument("lime: ridge_lambda must be non-negative");
    const double width = cfg.kernel_width > 0 ? cfg.kernel_width : 0.75 * std::sqrt(double(p));

    std::mt19937_64 rng(cfg.seed + sample_id);
    std::uniform_int_distribution<Index> pick(0, background.rows() - 1);
    const Index n = Index(cfg.n_samples);
    Matrix z(n, p);
    z.row(0) = x.transpose();
    for (Index s = 1; s < n; ++s)
        for (Index j = 0; j < p; ++j) z(s, j) = background(pick(rng), j);

    const Vector y = model(z);
    if (y.size() != n) throw std::runtime_error("lime: model returned the wrong number of outputs");
    const Vector w = ((z.rowwise() - x.transpose()).rowwise().squaredNorm() / (-width * width)).array().exp();
    const double wsum = w.sum();

    const Eigen::RowVectorXd zbar = (w.asDiagonal() * z).colwise().sum() / wsum;
    const double ybar = w.dot(y) / wsum;
    const Matrix zc = z.rowwise() - zbar;
    const Vector yc = y.array() - ybar;
    const Matrix a = zc.transpose() * w.asDiagonal() * zc + cfg.ridge_lambda * Matrix::Identity(p, p);
    const Vector b = zc.transpose() * w.asDiagonal() * yc;

    Explanation e;
    e.sample_id = sample_id;
    e.names = names;
    e.weights = a.ldlt().solve(b);
    if (!e.weights.allFinite()) e.weights = a.completeOrthogonalDecomposition().solve(b);
    e.intercept = ybar - zbar.dot(e.weights);
    const Vector resid = yc - zc * e.weights;
    const double ss_tot = w.dot(yc.cwiseProduct(yc));
    const double ss_res = w.dot(resid.cwiseProduct(resid));
    e.local_fit_r2 = ss_tot > 0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 1.0;
    return e;
}

std::map<std::string, std::size_t> feature_frequency(const std::vector<Explanation>& explanations, std::size_t top_k) {
    if (top_k < 1) throw std::invalid_argument("feature_frequency: top_k must be at least 1");
    if (explanations.empty()) throw std::invalid_argument("feature_frequency: no explanations");
    std::map<std::string, std::size_t> counts;
    for (const auto& e : explanations) {
        std::vector<std::size_t> order(e.names.size());
        for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double wa = std::abs(e.weights[Index(a)]), wb = std::abs(e.weights[Index(b)]);
            return wa != wb ? wa > wb : e.names[a] < e.names[b];
        });
        for (std::size_t r = 0; r < std::min(top_k, order.size()); ++r) ++counts[e.names[order[r]]];
    }
    return counts;
}

std::map<std::string, std::size_t> aggregate_by_feature(const std::map<std::string, std::size_t>& counts) {
    std::map<std::string, std::size_t> out;
    for (const auto& [name, c] : counts) {
        const auto cut = name.rfind("_t");
        out[cut == std::string::npos ? name : name.substr(0, cut)] += c;
    }
    return out;
}

SaliencyReport gradient_saliency(const EncoderModel& model, const SequenceTensor& sequences) {
    const std::size_t n = sequences.n(), steps = sequences.steps(), features = sequences.features();
    if (n == 0) throw std::invalid_argument("saliency: no sequences");
    Graph g;
    const auto params = bind_parameters(g, model, false);
    const ForwardPass pass = forward(model, g, params, step_matrices(sequences), Mode::eval, nullptr, true);
    const Gradients grads = g.backward(sum(pass.final_state));

    SaliencyReport report;
    report.feature_names = sequences.feature_names;
    report.avg_gradients = Matrix::Zero(Index(steps), Index(features));
    Matrix per_feature = Matrix::Zero(Index(n), Index(features));  // time-averaged |gradient| per sample
    std::vector<double> column(n);
    for (std::size_t t = 0; t < steps; ++t) {
        const Matrix a = grads[pass.inputs[t]].cwiseAbs();
        per_feature += a / double(steps);
        for (Index f = 0; f < Index(features); ++f) {
            // Sorted summation keeps the mean independent of sample order.
            for (std::size_t i = 0; i < n; ++i) column[i] = a(Index(i), f);
            std::sort(column.begin(), column.end());
            double s = 0.0;
            for (double v : column) s += v;
            report.avg_gradients(Index(t), f) = s / double(n);
        }
    }
    for (Index i = 0; i < Index(n); ++i) {
        Index best = 0;
        per_feature.row(i).maxCoeff(&best);
        ++report.max_feature_counts[report.feature_names[std::size_t(best)]];
    }
    return report;
}

std::string format_saliency(const SaliencyReport& report) {
    std::ostringstream os;
    os.precision(17);
    os << "step";
    for (const auto& f : report.feature_names) os << ',' << f;
    os << '\n';
    for (Index t = 0; t < report.avg_gradients.rows(); ++t) {
        os << t;
        for (Index f = 0; f < report.avg_gradients.cols(); ++f) os << ',' << report.avg_gradients(t, f);
        os << '\n';
    }
    return os.str();
}

}  // namespace seqcox
