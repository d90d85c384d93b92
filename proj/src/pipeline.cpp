#include "seqcox/pipeline.hpp"

#include "seqcox/container.hpp"
#include "seqcox/explain.hpp"
#include "seqcox/km.hpp"
#include "seqcox/log.hpp"
#include "seqcox/tsne.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

namespace seqcox {

namespace fs = std::filesystem;

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"input", "", "recurrent-event table (delimited text)"},
        {"workdir", "seqcox_out", "directory for all artifacts"},
        {"seed", "0", "seed for the split, initialisation, dropout, LIME and t-SNE"},
        {"steps", "3", "intervals per patient sequence (T)"},
        {"features", "all", "comma-separated sequence features, or all"},
        {"event_codes", "1,2", "status codes counted as events"},
        {"outcome_rule", "last_row", "last_row or first_event"},
        {"train_fraction", "0.8", "patient-level train share; the rest is the test set"},
        {"models", "lstm,transformer,ssm", "encoders to train (lstm, transformer, ssm/mamba) or none"},
        {"epochs", "100", "training epochs"},
        {"batch_size", "32", "mini-batch size"},
        {"lr", "0.001", "Adam learning rate"},
        {"dropout", "0.5", "dropout on the final encoder state"},
        {"target", "survival_time", "regression target: survival_time or next_step"},
        {"validation_fraction", "0.2", "share of training patients held out for the validation loss"},
        {"ties", "efron", "Cox tie handling: efron or breslow"},
        {"classical", "cox,cox-interval,ag,pwp,wlw", "classical comparators, or none"},
        {"classical_covariates", "treatment,number,size", "covariates of the classical models"},
        {"pwp_timescale", "total", "total or gap"},
        {"wlw_k", "4", "maximum event order of the WLW model"},
        {"explain_model", "lstm", "encoder explained by LIME and saliency"},
        {"lime_samples", "1000", "perturbations per explanation"},
        {"lime_kernel_width", "0", "kernel width; 0 means 0.75*sqrt(T*F)"},
        {"lime_lambda", "0.001", "ridge penalty of the surrogate"},
        {"lime_top_k", "1", "features counted per explanation"},
        {"lime_max_explanations", "0", "explained training patients; 0 means all"},
        {"tsne_perplexity", "30", "t-SNE perplexity"},
        {"tsne_iterations", "3000", "t-SNE iterations"},
        {"tsne_learning_rate", "200", "t-SNE learning rate"},
        {"sim_patients", "50", "simulated patients"},
        {"sim_shape", "1.5", "Weibull shape"},
        {"sim_scale", "10", "Weibull scale, months"},
        {"sim_beta", "1,-0.5", "effects of the continuous and binary covariates"},
        {"sim_binary_prob", "0.5", "probability of the binary covariate"},
        {"sim_followup_mean", "12.2", "mean follow-up, months"},
        {"sim_followup_sd", "4", "follow-up standard deviation, months"},
        {"sim_target_censoring", "0.4", "censoring target used by sim_calibrate"},
        {"sim_calibrate", "false", "recalibrate sim_followup_mean before simulating"},
    };
    return keys;
}

namespace {

std::string trim_copy(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

double to_number(const std::string& v, const std::string& key) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
        throw std::invalid_argument("config key '" + key + "' is not a number: '" + v + "'");
    }
    return out;
}

bool known_key(const std::string& key) {
    const auto& keys = config_keys();
    return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == key; });
}

}  // namespace

PipelineConfig::PipelineConfig() {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

PipelineConfig PipelineConfig::parse(std::string_view text) {
    PipelineConfig c;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = trim_copy(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim_copy(std::string_view(t).substr(0, eq));
        try {
            c.set(key, trim_copy(std::string_view(t).substr(eq + 1)));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) { return parse(read_file(path)); }

void PipelineConfig::set(const std::string& key, const std::string& value) {
    if (!known_key(key)) throw std::invalid_argument("unknown config key '" + key + "'");
    values_[key] = value;
}

const std::string& PipelineConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    return it->second;
}

double PipelineConfig::number(const std::string& key) const { return to_number(get(key), key); }

long PipelineConfig::integer(const std::string& key) const {
    const double v = number(key);
    if (v != std::floor(v)) throw std::invalid_argument("config key '" + key + "' must be an integer");
    return long(v);
}

bool PipelineConfig::flag(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config key '" + key + "' must be true or false");
}

std::vector<std::string> PipelineConfig::list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(get(key));
    for (std::string item; std::getline(in, item, ',');) {
        item = trim_copy(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::uint64_t PipelineConfig::seed() const {
    const long s = integer("seed");
    if (s < 0) throw std::invalid_argument("seed must be non-negative");
    return std::uint64_t(s);
}

std::vector<EncoderKind> PipelineConfig::models() const {
    std::vector<EncoderKind> out;
    for (const auto& name : list("models")) {
        if (name == "none") continue;
        const EncoderKind k = encoder_kind_from_string(name);
        if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
    }
    return out;
}

TrainConfig PipelineConfig::train_config() const {
    TrainConfig t;
    t.epochs = int(integer("epochs"));
    const long batch = integer("batch_size");
    if (batch < 1) throw std::invalid_argument("batch_size must be positive");
    t.batch_size = std::size_t(batch);
    t.lr = number("lr");
    t.dropout_p = number("dropout");
    t.seed = seed();
    t.target_kind = target_kind_from_string(get("target"));
    t.validation_fraction = number("validation_fraction");
    validate(t);
    return t;
}

CoxOptions PipelineConfig::cox_options() const {
    CoxOptions o;
    o.ties = ties_from_string(get("ties"));
    return o;
}

SimConfig PipelineConfig::sim_config() const {
    SimConfig s;
    const long n = integer("sim_patients");
    if (n < 1) throw std::invalid_argument("sim_patients must be positive");
    s.n_patients = std::size_t(n);
    s.weibull_shape = number("sim_shape");
    s.weibull_scale = number("sim_scale");
    const auto beta = list("sim_beta");
    if (beta.size() != 2) throw std::invalid_argument("sim_beta needs two comma-separated values");
    for (std::size_t j = 0; j < 2; ++j) s.beta[j] = to_number(beta[j], "sim_beta");
    s.binary_prob = number("sim_binary_prob");
    s.followup_mean = number("sim_followup_mean");
    s.followup_sd = number("sim_followup_sd");
    s.target_censoring = number("sim_target_censoring");
    s.seed = seed();
    validate(s);
    return s;
}

nlohmann::json PipelineConfig::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
}

std::string model_label(EncoderKind kind) {
    switch (kind) {
        case EncoderKind::lstm: return "lstm";
        case EncoderKind::transformer: return "transformer";
        case EncoderKind::ssm: return "mamba";
    }
    return "?";
}

namespace {

struct Prepared {
    RecordTable table;
    std::vector<std::string> load_warnings;
    SequenceTensor sequences;
    std::vector<SurvivalOutcome> outcomes;
    std::vector<std::size_t> train, test;
    std::string input_hash;

    std::vector<SurvivalOutcome> outcomes_of(const std::vector<std::size_t>& idx) const {
        std::vector<SurvivalOutcome> out;
        for (auto i : idx) out.push_back(outcomes[i]);
        return out;
    }
};

Prepared prepare(const PipelineConfig& c) {
    const std::string& input = c.get("input");
    if (input.empty()) throw std::invalid_argument("no input table configured (set input)");
    Prepared p;
    const std::string bytes = read_file(input);
    p.input_hash = git_blob_hash(bytes);
    LoadReport report;
    p.table = parse_records(bytes, &report);
    if (p.table.rows.empty()) throw std::invalid_argument("input table has no rows");
    p.load_warnings = report.warnings;
    validate_records(p.table);

    const auto features = c.list("features");
    const bool all = features.empty() || (features.size() == 1 && features[0] == "all");
    const long steps = c.integer("steps");
    if (steps < 1) throw std::invalid_argument("steps must be positive");
    p.sequences = build_sequences(p.table, std::size_t(steps), all ? all_feature_names() : features);

    EventMapping mapping;
    mapping.event_codes.clear();
    for (const auto& code : c.list("event_codes")) mapping.event_codes.insert(std::stoi(code));
    const std::string& rule = c.get("outcome_rule");
    if (rule == "last_row") mapping.rule = OutcomeRule::last_row;
    else if (rule == "first_event") mapping.rule = OutcomeRule::first_event;
    else throw std::invalid_argument("outcome_rule must be last_row or first_event");
    p.outcomes = derive_survival(p.table, mapping);
    if (std::none_of(p.outcomes.begin(), p.outcomes.end(), [](const SurvivalOutcome& o) { return o.event; })) {
        log::warn("no patient has an event under outcome_rule = " + rule +
                  (rule == "last_row" ? "; simulated tables need outcome_rule = first_event" : ""));
    }
    for (std::size_t i = 0; i < p.outcomes.size(); ++i) {
        if (p.outcomes[i].patient_id != p.sequences.patient_ids[i]) throw std::logic_error("outcome and sequence order differ");
    }

    const double frac = c.number("train_fraction");
    if (!(frac > 0 && frac <= 1)) throw std::invalid_argument("train_fraction must lie in (0, 1]");
    std::vector<std::size_t> order(p.outcomes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(c.seed());
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = std::max<std::size_t>(2, std::size_t(std::llround(frac * double(order.size()))));
    p.train.assign(order.begin(), order.begin() + std::ptrdiff_t(std::min(n_train, order.size())));
    p.test.assign(order.begin() + std::ptrdiff_t(p.train.size()), order.end());
    std::sort(p.train.begin(), p.train.end());
    std::sort(p.test.begin(), p.test.end());
    return p;
}

nlohmann::json meta(const PipelineConfig& c, std::string_view stage, const std::string& input_hash) {
    return {{"stage", stage}, {"seed", c.seed()}, {"config", c.to_json()}, {"input_hash", input_hash}};
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_file(path, j.dump(2) + "\n"); }

std::string csv_number(double v) {
    if (!std::isfinite(v)) return "nan";
    char buf[32];
    *std::to_chars(buf, buf + 31, v).ptr = '\0';
    return buf;
}

// Best-effort JSON value: NaN becomes null.
nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

fs::path model_path(const PipelineConfig& c, EncoderKind k) { return c.workdir() / ("model_" + model_label(k) + ".bin"); }

std::vector<EncoderKind> required_models(const PipelineConfig& c) {
    const auto m = c.models();
    if (m.empty()) throw std::invalid_argument("nothing to run: no encoder models selected");
    return m;
}

EncoderModel load_trained(const PipelineConfig& c, EncoderKind k) {
    const fs::path path = model_path(c, k);
    if (!fs::exists(path)) throw std::runtime_error("missing " + path.string() + "; run the train stage first");
    return load_model(path);
}

struct DeepFit {
    CoxFit fit;
    Matrix train_features, test_features;
    Vector train_risk;
    double c_test = std::nan("");
    RiskGroups groups;
    LogRank logrank;
    bool logrank_valid = false;
};

DeepFit fit_deep(const PipelineConfig& c, const Prepared& p, const EncoderModel& model) {
    DeepFit d;
    d.train_features = extract_features(model, p.sequences.subset(p.train));
    d.fit = fit_cox(d.train_features, p.outcomes_of(p.train), c.cox_options());
    d.train_risk = linear_predictor(d.train_features, d.fit.beta);
    if (!p.test.empty()) {
        d.test_features = extract_features(model, p.sequences.subset(p.test));
        try {
            d.c_test = concordance_index(linear_predictor(d.test_features, d.fit.beta), p.outcomes_of(p.test));
        } catch (const std::invalid_argument&) {
            log::warn("no comparable test pairs; test C-index unavailable");
        }
    }
    d.groups = risk_groups(d.train_risk);
    std::vector<SurvivalOutcome> high, low;
    for (std::size_t i = 0; i < p.train.size(); ++i) (d.groups.labels[i] ? high : low).push_back(p.outcomes[p.train[i]]);
    try {
        d.logrank = logrank_test(high, low);
        d.logrank_valid = true;
    } catch (const std::invalid_argument& e) {
        log::warn(std::string("log-rank test unavailable: ") + e.what());
    }
    return d;
}

nlohmann::json deep_summary(const DeepFit& d) {
    nlohmann::json j = summary_json(d.fit);
    j["c_index_train"] = d.fit.c_index;
    j["c_index_test"] = num(d.c_test);
    j["logrank_chi2"] = d.logrank_valid ? num(d.logrank.chi2) : nlohmann::json(nullptr);
    j["logrank_p"] = d.logrank_valid ? num(d.logrank.p) : nlohmann::json(nullptr);
    j["risk_median"] = d.groups.median;
    j["warnings"] = d.fit.warnings;
    return j;
}

std::vector<ClassicalKind> classical_kinds(const PipelineConfig& c) {
    std::vector<ClassicalKind> out;
    for (const auto& name : c.list("classical")) {
        if (name != "none") out.push_back(classical_kind_from_string(name));
    }
    return out;
}

ClassicalFit fit_one_classical(const PipelineConfig& c, const Prepared& p, ClassicalKind k) {
    const Timescale ts = c.get("pwp_timescale") == "gap" ? Timescale::gap : Timescale::total;
    if (c.get("pwp_timescale") != "gap" && c.get("pwp_timescale") != "total") {
        throw std::invalid_argument("pwp_timescale must be total or gap");
    }
    const auto table = expand(k, p.table, c.list("classical_covariates"), ts, int(c.integer("wlw_k")));
    return fit_classical(table, c.cox_options());
}

// ---- stages ---------------------------------------------------------------

void stage_ingest(const PipelineConfig& c) {
    const Prepared p = prepare(c);
    const auto m = meta(c, "ingest", p.input_hash);
    write_sequences(c.workdir() / "sequences.bin", p.sequences, m);
    write_file(c.workdir() / "outcomes.csv", "# " + m.dump() + "\n" + format_outcomes(p.outcomes));

    const DataSummary s = describe(p.table);
    nlohmann::json columns = nlohmann::json::array();
    for (const auto& col : s.columns) {
        columns.push_back({{"name", col.name}, {"min", col.min}, {"median", col.median}, {"mean", col.mean}, {"max", col.max}});
    }
    std::vector<PatientId> train_ids, test_ids;
    for (auto i : p.train) train_ids.push_back(p.outcomes[i].patient_id);
    for (auto i : p.test) test_ids.push_back(p.outcomes[i].patient_id);
    write_json(c.workdir() / "data_report.json",
               {{"meta", m},
                {"n_patients", s.n_patients},
                {"n_rows", s.n_rows},
                {"feature_names", p.sequences.feature_names},
                {"steps", p.sequences.steps()},
                {"censoring_fraction", censoring_fraction(p.outcomes)},
                {"treatment", s.treatment},
                {"columns", columns},
                {"train_ids", train_ids},
                {"test_ids", test_ids},
                {"warnings", p.load_warnings}});
    log::info("ingest: " + std::to_string(s.n_patients) + " patients, " + std::to_string(s.n_rows) + " rows");
}

void stage_simulate(const PipelineConfig& c) {
    SimConfig s = c.sim_config();
    if (c.flag("sim_calibrate")) {
        s.followup_mean = calibrate_followup(s);
        log::info("simulate: calibrated follow-up mean " + csv_number(s.followup_mean));
    }
    const RecordTable table = simulate_recurrent(s);
    const std::string text = format_records(table);
    write_file(c.workdir() / "simulated.csv", text);
    auto m = meta(c, "simulate", "");
    m["content_hash"] = git_blob_hash(text);
    m["simulation"] = to_json(s);
    nlohmann::json report = significance_report(table);
    report["meta"] = m;
    write_json(c.workdir() / "simulation_report.json", report);
}

void stage_train(const PipelineConfig& c) {
    const Prepared p = prepare(c);
    const TrainConfig tc = c.train_config();
    for (EncoderKind k : required_models(c)) {
        const SequenceTensor train = p.sequences.subset(p.train);
        EncoderDims dims = default_dims(k, train.features(), train.steps());
        if (tc.target_kind == TargetKind::next_step) dims.targets = train.features();
        EncoderModel model(k, dims, tc.dropout_p, tc.seed);
        log::info("train: " + model_label(k) + ", " + std::to_string(model.parameter_count()) + " parameters");
        const TrainResult r = train_encoder(model, train, p.outcomes_of(p.train), tc);
        auto m = meta(c, "train", p.input_hash);
        save_model(model_path(c, k), model, m);
        write_json(c.workdir() / ("train_" + model_label(k) + ".json"),
                   {{"meta", m},
                    {"model", model_label(k)},
                    {"parameters", model.parameter_count()},
                    {"loss_history", r.loss_history},
                    {"validation_history", r.validation_history},
                    {"validation_ids", r.validation_ids}});
    }
}

void stage_features(const PipelineConfig& c) {
    const Prepared p = prepare(c);
    for (EncoderKind k : required_models(c)) {
        const EncoderModel model = load_trained(c, k);
        const Matrix f = extract_features(model, p.sequences);
        std::ostringstream os;
        os << "# " << meta(c, "features", p.input_hash).dump() << "\npatient_id,split";
        for (Index j = 0; j < f.cols(); ++j) os << ",f" << j;
        os << '\n';
        std::vector<char> is_train(p.outcomes.size(), 0);
        for (auto i : p.train) is_train[i] = 1;
        for (Index i = 0; i < f.rows(); ++i) {
            os << p.outcomes[std::size_t(i)].patient_id << ',' << (is_train[std::size_t(i)] ? "train" : "test");
            for (Index j = 0; j < f.cols(); ++j) os << ',' << csv_number(f(i, j));
            os << '\n';
        }
        write_file(c.workdir() / ("features_" + model_label(k) + ".csv"), os.str());
    }
}

void stage_fit_cox(const PipelineConfig& c) {
    const Prepared p = prepare(c);
    for (EncoderKind k : required_models(c)) {
        const DeepFit d = fit_deep(c, p, load_trained(c, k));
        nlohmann::json j = deep_summary(d);
        j["meta"] = meta(c, "fit-cox", p.input_hash);
        j["model"] = model_label(k) + "-cox";
        write_json(c.workdir() / ("fit_" + model_label(k) + "-cox.json"), j);
    }
}

void stage_fit_classical(const PipelineConfig& c) {
    const Prepared p = prepare(c);
    for (ClassicalKind k : classical_kinds(c)) {
        const ClassicalFit f = fit_one_classical(c, p, k);
        nlohmann::json j = summary_json(f);
        j["meta"] = meta(c, "fit-classical", p.input_hash);
        j["model"] = std::string(to_string(k));
        write_json(c.workdir() / ("fit_" + std::string(to_string(k)) + ".json"), j);
    }
}

void stage_evaluate(const PipelineConfig& c) {
    const Prepared p = prepare(c);
    nlohmann::json rows = nlohmann::json::array();
    for (EncoderKind k : c.models()) {
        const DeepFit d = fit_deep(c, p, load_trained(c, k));
        rows.push_back({{"model", model_label(k) + "-cox"},
                        {"c_index", d.fit.c_index},
                        {"c_index_test", num(d.c_test)},
                        {"aic", d.fit.aic},
                        {"logrank_p", d.logrank_valid ? num(d.logrank.p) : nlohmann::json(nullptr)},
                        {"n", d.fit.n},
                        {"converged", d.fit.converged}});
    }
    for (ClassicalKind k : classical_kinds(c)) {
        const ClassicalFit f = fit_one_classical(c, p, k);
        rows.push_back({{"model", std::string(to_string(k))},
                        {"c_index", f.fit.c_index},
                        {"c_index_test", nullptr},
                        {"aic", f.fit.aic},
                        {"logrank_p", nullptr},
                        {"n", f.fit.n},
                        {"converged", f.fit.converged}});
    }
    if (rows.empty()) throw std::invalid_argument("nothing to run: no models selected");
    write_json(c.workdir() / "metrics.json", {{"meta", meta(c, "evaluate", p.input_hash)}, {"metrics", rows}});
}

void stage_km(const PipelineConfig& c) {
    const Prepared p = prepare(c);
    for (EncoderKind k : required_models(c)) {
        const DeepFit d = fit_deep(c, p, load_trained(c, k));
        std::vector<SurvivalOutcome> high, low;
        for (std::size_t i = 0; i < p.train.size(); ++i) (d.groups.labels[i] ? high : low).push_back(p.outcomes[p.train[i]]);
        auto m = meta(c, "km", p.input_hash);
        m["logrank_p"] = d.logrank_valid ? num(d.logrank.p) : nlohmann::json(nullptr);
        m["logrank_chi2"] = d.logrank_valid ? num(d.logrank.chi2) : nlohmann::json(nullptr);
        m["n_high"] = high.size();
        m["n_low"] = low.size();
        std::string text = "# " + m.dump() + "\ntime,survival,at_risk,events,group\n";
        if (!high.empty()) text += format_km_rows(kaplan_meier(high), "high");
        if (!low.empty()) text += format_km_rows(kaplan_meier(low), "low");
        write_file(c.workdir() / ("km_" + model_label(k) + ".csv"), text);
    }
}

void stage_explain(const PipelineConfig& c) {
    const Prepared p = prepare(c);
    const auto models = required_models(c);
    EncoderKind target = encoder_kind_from_string(c.get("explain_model"));
    if (std::find(models.begin(), models.end(), target) == models.end()) {
        log::warn("explain_model is not among the trained models; explaining " + model_label(models.front()));
        target = models.front();
    }
    const EncoderModel model = load_trained(c, target);
    const SequenceTensor train = p.sequences.subset(p.train);
    const Matrix background = flatten(train);
    const auto names = flat_feature_names(train.feature_names, train.steps());

    LimeConfig lc;
    lc.n_samples = std::size_t(c.integer("lime_samples"));
    lc.kernel_width = c.number("lime_kernel_width");
    lc.ridge_lambda = c.number("lime_lambda");
    lc.seed = c.seed();
    std::size_t count = train.n();
    if (const long max = c.integer("lime_max_explanations"); max > 0) count = std::min(count, std::size_t(max));

    const ScalarModel f = encoder_scalar_model(model);
    std::vector<Explanation> explanations;
    std::string lines;
    for (std::size_t i = 0; i < count; ++i) {
        Explanation e = lime_explain(f, background.row(Index(i)).transpose(), background, names, lc, i);
        nlohmann::json j = e.to_json();
        j["patient_id"] = train.patient_ids[i];
        lines += j.dump() + "\n";
        explanations.push_back(std::move(e));
    }
    auto m = meta(c, "explain", p.input_hash);
    m["model"] = model_label(target);
    write_file(c.workdir() / "lime.jsonl", "# " + m.dump() + "\n" + lines);

    const long top_k = c.integer("lime_top_k");
    if (top_k < 1) throw std::invalid_argument("lime_top_k must be at least 1");
    const auto by_step = feature_frequency(explanations, std::size_t(top_k));
    write_json(c.workdir() / "lime_freq.json",
               {{"meta", m}, {"top_k", top_k}, {"by_feature", aggregate_by_feature(by_step)}, {"by_feature_step", by_step}});

    const SaliencyReport s = gradient_saliency(model, train);
    auto sm = m;
    sm["max_feature_counts"] = s.max_feature_counts;
    write_file(c.workdir() / "saliency.csv", "# " + sm.dump() + "\n" + format_saliency(s));
}

void stage_tsne(const PipelineConfig& c) {
    const Prepared p = prepare(c);
    EmbedConfig ec;
    ec.perplexity = c.number("tsne_perplexity");
    ec.iterations = int(c.integer("tsne_iterations"));
    ec.learning_rate = c.number("tsne_learning_rate");
    ec.seed = c.seed();
    for (EncoderKind k : required_models(c)) {
        const DeepFit d = fit_deep(c, p, load_trained(c, k));
        const Embedding e = tsne(d.train_features, ec);
        auto m = meta(c, "tsne", p.input_hash);
        m["kl"] = e.kl;
        m["perplexity_used"] = e.perplexity;
        std::ostringstream os;
        os << "# " << m.dump() << "\npatient_id,x,y,risk_group\n";
        for (std::size_t i = 0; i < p.train.size(); ++i) {
            os << p.outcomes[p.train[i]].patient_id << ',' << csv_number(e.y(Index(i), 0)) << ','
               << csv_number(e.y.cols() > 1 ? e.y(Index(i), 1) : 0.0) << ',' << (d.groups.labels[i] ? "high" : "low") << '\n';
        }
        write_file(c.workdir() / ("tsne_" + model_label(k) + ".csv"), os.str());
    }
}

void dispatch(std::string_view stage, const PipelineConfig& c) {
    if (stage == "ingest") return stage_ingest(c);
    if (stage == "simulate") return stage_simulate(c);
    if (stage == "train") return stage_train(c);
    if (stage == "features") return stage_features(c);
    if (stage == "fit-cox") return stage_fit_cox(c);
    if (stage == "fit-classical") return stage_fit_classical(c);
    if (stage == "evaluate") return stage_evaluate(c);
    if (stage == "km") return stage_km(c);
    if (stage == "explain") return stage_explain(c);
    if (stage == "tsne") return stage_tsne(c);
    throw std::invalid_argument("unknown stage '" + std::string(stage) + "'");
}

}  // namespace

void run_stage(std::string_view stage, const PipelineConfig& config) {
    if (stage == "run-all") {
        required_models(config);
        for (const char* s : {"ingest", "train", "features", "fit-cox", "fit-classical", "evaluate", "km", "explain", "tsne"}) {
            log::info("run-all: stage " + std::string(s));
            run_stage(s, config);
        }
        return;
    }
    try {
        dispatch(stage, config);
    } catch (const std::exception& e) {
        throw std::runtime_error("stage " + std::string(stage) + ": " + e.what());
    }
}

}  // namespace seqcox
