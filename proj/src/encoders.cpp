#include "seqcox/encoders.hpp"

#include "seqcox/adam.hpp"
#include "seqcox/container.hpp"
#include "seqcox/log.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace seqcox {

std::string_view to_string(EncoderKind kind) {
    switch (kind) {
        case EncoderKind::lstm: return "lstm";
        case EncoderKind::transformer: return "transformer";
        case EncoderKind::ssm: return "ssm";
    }
    return "unknown";
}

EncoderKind encoder_kind_from_string(std::string_view name) {
    if (name == "lstm") return EncoderKind::lstm;
    if (name == "transformer") return EncoderKind::transformer;
    if (name == "ssm" || name == "mamba") return EncoderKind::ssm;
    throw std::invalid_argument("unknown encoder kind '" + std::string(name) + "'");
}

std::string_view to_string(TargetKind kind) {
    return kind == TargetKind::survival_time ? "survival_time" : "next_step";
}

TargetKind target_kind_from_string(std::string_view name) {
    if (name == "survival_time") return TargetKind::survival_time;
    if (name == "next_step") return TargetKind::next_step;
    throw std::invalid_argument("unknown target kind '" + std::string(name) + "'");
}

EncoderDims default_dims(EncoderKind kind, std::size_t features, std::size_t steps) {
    EncoderDims d;
    d.features = features;
    d.steps = steps;
    d.hidden = kind == EncoderKind::lstm ? 20 : 16;
    return d;
}

EncoderModel::EncoderModel(EncoderKind kind, EncoderDims dims, double dropout_p, std::uint64_t seed)
    : kind_(kind), dims_(dims), dropout_p_(dropout_p), seed_(seed) {
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("dropout probability must be in [0, 1)");
    if (dims.features == 0 || dims.steps == 0 || dims.hidden == 0 || dims.outputs == 0 || dims.targets == 0) {
        throw std::invalid_argument("encoder dimensions must be positive");
    }
    const Index F = Index(dims.features), H = Index(dims.hidden), M = Index(dims.outputs), K = Index(dims.targets);
    auto inv_sqrt = [](Index fan_in) { return 1.0 / std::sqrt(double(fan_in)); };
    std::mt19937_64 rng(seed);

    switch (kind) {
        case EncoderKind::lstm:
            add("lstm.input", F, 4 * H, inv_sqrt(F), rng);
            add("lstm.recurrent", H, 4 * H, inv_sqrt(H), rng);
            add("lstm.bias", 1, 4 * H, inv_sqrt(H), rng);
            param("lstm.bias").middleCols(H, H).setConstant(1.0);
            add("dense.weight", H, M, inv_sqrt(H), rng);
            add("dense.bias", 1, M, inv_sqrt(H), rng);
            break;
        case EncoderKind::transformer: {
            if (dims.heads == 0 || dims.hidden % dims.heads != 0) {
                throw std::invalid_argument("d_model " + std::to_string(dims.hidden) + " is not divisible by " +
                                            std::to_string(dims.heads) + " heads");
            }
            if (dims.ffn == 0) throw std::invalid_argument("feed-forward width must be positive");
            const Index W = Index(dims.ffn);
            add("embed.weight", F, H, inv_sqrt(F), rng);
            add("embed.bias", 1, H, inv_sqrt(F), rng);
            add("attn.query", H, H, inv_sqrt(H), rng);
            add("attn.key", H, H, inv_sqrt(H), rng);
            add("attn.value", H, H, inv_sqrt(H), rng);
            add("attn.output", H, H, inv_sqrt(H), rng);
            add("ffn.weight1", H, W, inv_sqrt(H), rng);
            add("ffn.bias1", 1, W, inv_sqrt(H), rng);
            add("ffn.weight2", W, H, inv_sqrt(W), rng);
            add("ffn.bias2", 1, H, inv_sqrt(W), rng);
            add("dense.weight", H, M, inv_sqrt(H), rng);
            add("dense.bias", 1, M, inv_sqrt(H), rng);
            break;
        }
        case EncoderKind::ssm:
            add("ssm.encoder", F, H, inv_sqrt(F), rng);
            add("ssm.encoder_bias", 1, H, inv_sqrt(F), rng);
            add("ssm.A", H, H, inv_sqrt(H), rng);
            add("ssm.B", H, H, inv_sqrt(H), rng);
            add("dense.weight", H, M, inv_sqrt(H), rng);
            add("dense.bias", 1, M, inv_sqrt(H), rng);
            break;
    }
    add("head.weight", M, K, inv_sqrt(M), rng);
    add("head.bias", 1, K, inv_sqrt(M), rng);
}

void EncoderModel::set_dropout_p(double p) {
    if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout probability must be in [0, 1)");
    dropout_p_ = p;
}

void EncoderModel::add(std::string name, Index rows, Index cols, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = u(rng);
    names_.push_back(std::move(name));
    params_.push_back(std::move(m));
}

Matrix& EncoderModel::param(std::string_view name) {
    return const_cast<Matrix&>(std::as_const(*this).param(name));
}

const Matrix& EncoderModel::param(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) return params_[i];
    }
    throw std::out_of_range("encoder has no parameter '" + std::string(name) + "'");
}

std::size_t EncoderModel::parameter_count() const {
    std::size_t n = 0;
    for (const Matrix& p : params_) n += std::size_t(p.size());
    return n;
}

void EncoderModel::zero() {
    for (Matrix& p : params_) p.setZero();
}

std::vector<Var> bind_parameters(Graph& g, const EncoderModel& model, bool differentiable) {
    std::vector<Var> out;
    for (const Matrix& p : model.params()) out.push_back(differentiable ? g.variable(p) : g.constant(p));
    return out;
}

Matrix dropout_mask(Index rows, Index cols, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution keep(1.0 - p);
    Matrix m(rows, cols);
    const double scale = 1.0 / (1.0 - p);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = keep(rng) ? scale : 0.0;
    return m;
}

Matrix positional_encoding(std::size_t steps, std::size_t width) {
    Matrix pe(static_cast<Index>(steps), static_cast<Index>(width));
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t j = 0; j < width; ++j) {
            const double rate = std::pow(10000.0, -double(2 * (j / 2)) / double(width));
            pe(Index(t), Index(j)) = j % 2 == 0 ? std::sin(double(t) * rate) : std::cos(double(t) * rate);
        }
    }
    return pe;
}

Var attention(Var q, Var k, Var v) {
    const double dk = double(q.graph->value(q).cols());
    return matmul(softmax_rows((1.0 / std::sqrt(dk)) * matmul(q, transpose(k))), v);
}

namespace {

struct ParamLookup {
    const EncoderModel& model;
    const std::vector<Var>& vars;
    Var operator()(std::string_view name) const {
        const auto& names = model.names();
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw std::out_of_range("missing parameter " + std::string(name));
        return vars[std::size_t(it - names.begin())];
    }
};

Var maybe_dropout(Graph& g, Var x, const EncoderModel& model, Mode mode, std::mt19937_64* rng) {
    if (mode == Mode::eval || model.dropout_p() == 0.0) return x;
    if (!rng) throw std::invalid_argument("train-mode forward needs a dropout generator");
    const Matrix& v = g.value(x);
    return hadamard(x, g.constant(dropout_mask(v.rows(), v.cols(), model.dropout_p(), *rng)));
}

Var lstm_state(const ParamLookup& p, const std::vector<Var>& xs, Index units) {
    const Var w_in = p("lstm.input"), w_rec = p("lstm.recurrent"), bias = p("lstm.bias");
    Var h{}, c{};
    for (std::size_t t = 0; t < xs.size(); ++t) {
        Var z = matmul(xs[t], w_in) + bias;
        if (t > 0) z = z + matmul(h, w_rec);
        const Var in_gate = sigmoid(slice_cols(z, 0, units));
        const Var forget = sigmoid(slice_cols(z, units, units));
        const Var cand = tanh(slice_cols(z, 2 * units, units));
        const Var out_gate = sigmoid(slice_cols(z, 3 * units, units));
        c = t == 0 ? hadamard(in_gate, cand) : hadamard(forget, c) + hadamard(in_gate, cand);
        h = hadamard(out_gate, tanh(c));
    }
    return h;
}

Var ssm_state(const ParamLookup& p, const std::vector<Var>& xs) {
    const Var enc = p("ssm.encoder"), enc_bias = p("ssm.encoder_bias");
    const Var a_t = transpose(p("ssm.A")), b_t = transpose(p("ssm.B"));
    Var h{};
    for (std::size_t t = 0; t < xs.size(); ++t) {
        const Var drive = matmul(matmul(xs[t], enc) + enc_bias, b_t);
        h = t == 0 ? drive : matmul(h, a_t) + drive;
    }
    return h;
}

Var transformer_state(Graph& g, const ParamLookup& p, const std::vector<Var>& xs, const EncoderDims& dims) {
    const Index rows = g.value(xs.front()).rows();
    const Index steps = Index(xs.size());
    const Index heads = Index(dims.heads);
    const Index dk = Index(dims.hidden / dims.heads);
    const Var pe = g.constant(positional_encoding(std::size_t(steps), dims.hidden));

    std::vector<Var> pooled;
    for (Index i = 0; i < rows; ++i) {
        std::vector<Var> seq;
        for (Var x : xs) seq.push_back(slice_rows(x, i, 1));
        const Var xi = steps == 1 ? seq.front() : g.concat(seq, 0);

        Var e = matmul(xi, p("embed.weight")) + p("embed.bias");
        if (dims.positional_encoding) e = e + pe;
        const Var q = matmul(e, p("attn.query"));
        const Var k = matmul(e, p("attn.key"));
        const Var v = matmul(e, p("attn.value"));
        std::vector<Var> per_head;
        for (Index h = 0; h < heads; ++h) {
            per_head.push_back(attention(slice_cols(q, h * dk, dk), slice_cols(k, h * dk, dk), slice_cols(v, h * dk, dk)));
        }
        const Var mixed = heads == 1 ? per_head.front() : g.concat(per_head, 1);
        const Var z = e + matmul(mixed, p("attn.output"));
        const Var ffn = matmul(relu(matmul(z, p("ffn.weight1")) + p("ffn.bias1")), p("ffn.weight2")) + p("ffn.bias2");
        pooled.push_back(mean_rows(z + ffn));
    }
    return rows == 1 ? pooled.front() : g.concat(pooled, 0);
}

}  // namespace

ForwardPass forward(const EncoderModel& model, Graph& g, const std::vector<Var>& params,
                    const std::vector<Matrix>& steps, Mode mode, std::mt19937_64* dropout_rng,
                    bool differentiable_inputs) {
    const EncoderDims& dims = model.dims();
    if (steps.empty() || steps.size() > dims.steps) {
        throw std::invalid_argument("encoder expects 1.." + std::to_string(dims.steps) + " steps, got " +
                                    std::to_string(steps.size()));
    }
    if (params.size() != model.params().size()) throw std::invalid_argument("parameter binding does not match model");

    ForwardPass pass;
    const Index rows = steps.front().rows();
    for (const Matrix& x : steps) {
        if (x.rows() != rows || x.cols() != Index(dims.features)) {
            throw std::invalid_argument(std::string(to_string(model.kind())) + " forward: step shape " + shape_string(x) +
                                        ", expected [" + std::to_string(rows) + "x" + std::to_string(dims.features) + "]");
        }
        pass.inputs.push_back(differentiable_inputs ? g.variable(x) : g.constant(x));
    }

    const ParamLookup p{model, params};
    switch (model.kind()) {
        case EncoderKind::lstm: pass.final_state = lstm_state(p, pass.inputs, Index(dims.hidden)); break;
        case EncoderKind::transformer: pass.final_state = transformer_state(g, p, pass.inputs, dims); break;
        case EncoderKind::ssm: pass.final_state = ssm_state(p, pass.inputs); break;
    }
    const Var dropped = maybe_dropout(g, pass.final_state, model, mode, dropout_rng);
    pass.features = matmul(dropped, p("dense.weight")) + p("dense.bias");
    pass.prediction = matmul(pass.features, p("head.weight")) + p("head.bias");
    return pass;
}

std::vector<Matrix> step_matrices(const SequenceTensor& seq) {
    std::vector<std::size_t> all(seq.n());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return step_matrices(seq, all, seq.steps());
}

std::vector<Matrix> step_matrices(const SequenceTensor& seq, const std::vector<std::size_t>& idx,
                                  std::size_t max_steps) {
    std::vector<Matrix> out;
    for (std::size_t t = 0; t < std::min(max_steps, seq.steps()); ++t) {
        Matrix m(Index(idx.size()), Index(seq.features()));
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t f = 0; f < seq.features(); ++f) m(Index(r), Index(f)) = seq.data(idx[r], t, f);
        out.push_back(std::move(m));
    }
    return out;
}

void validate(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (!(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
    if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0)) {
        throw std::invalid_argument("validation fraction must be in [0, 1)");
    }
}

nlohmann::json to_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"lr", cfg.lr},
            {"dropout_p", cfg.dropout_p},
            {"seed", cfg.seed},
            {"target_kind", to_string(cfg.target_kind)},
            {"validation_fraction", cfg.validation_fraction}};
}

namespace {

struct Targets {
    Matrix values;               ///< N x K
    std::size_t input_steps = 0;  ///< number of leading steps fed to the model
};

Targets make_targets(const EncoderModel& model, const SequenceTensor& seq, const std::vector<SurvivalOutcome>& outcomes,
                     const std::vector<std::size_t>& train_idx, TargetKind kind) {
    Targets t;
    const std::size_t n = seq.n();
    if (kind == TargetKind::survival_time) {
        if (model.dims().targets != 1) throw std::invalid_argument("survival-time target needs a 1-wide head");
        std::unordered_map<PatientId, double> time;
        for (const auto& o : outcomes) time[o.patient_id] = o.time;
        t.values.resize(Index(n), 1);
        for (std::size_t i = 0; i < n; ++i) {
            auto it = time.find(seq.patient_ids[i]);
            if (it == time.end()) throw std::invalid_argument("no outcome for patient " + std::to_string(seq.patient_ids[i]));
            t.values(Index(i), 0) = it->second;
        }
        double mean = 0.0;
        for (std::size_t i : train_idx) mean += t.values(Index(i), 0);
        mean /= double(train_idx.size());
        double var = 0.0;
        for (std::size_t i : train_idx) var += std::pow(t.values(Index(i), 0) - mean, 2);
        double sd = std::sqrt(var / double(train_idx.size()));
        if (!(sd > 0.0)) sd = 1.0;
        t.values = (t.values.array() - mean) / sd;
        t.input_steps = seq.steps();
    } else {
        if (seq.steps() < 2) throw std::invalid_argument("next-step target needs at least 2 steps");
        if (model.dims().targets != seq.features()) throw std::invalid_argument("next-step target needs an F-wide head");
        t.values = step_matrices(seq).back();
        t.input_steps = seq.steps() - 1;
    }
    return t;
}

Matrix rows_of(const Matrix& m, const std::vector<std::size_t>& idx) {
    Matrix out(Index(idx.size()), m.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) out.row(Index(r)) = m.row(Index(idx[r]));
    return out;
}

double eval_loss(const EncoderModel& model, const SequenceTensor& seq, const Targets& targets,
                 const std::vector<std::size_t>& idx) {
    Graph g;
    const auto params = bind_parameters(g, model, false);
    const auto pass = forward(model, g, params, step_matrices(seq, idx, targets.input_steps), Mode::eval);
    return (g.value(pass.prediction) - rows_of(targets.values, idx)).squaredNorm() / double(idx.size() * targets.values.cols());
}

}  // namespace

TrainResult train_encoder(EncoderModel& model, const SequenceTensor& sequences,
                          const std::vector<SurvivalOutcome>& outcomes, const TrainConfig& cfg) {
    validate(cfg);
    if (sequences.features() != model.dims().features) {
        throw std::invalid_argument("sequence feature count does not match the encoder");
    }
    model.set_dropout_p(cfg.dropout_p);
    const std::size_t n = sequences.n();
    std::mt19937_64 rng(cfg.seed);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = std::size_t(std::floor(cfg.validation_fraction * double(n)));
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + std::ptrdiff_t(n_val));
    std::vector<std::size_t> train_idx(order.begin() + std::ptrdiff_t(n_val), order.end());
    std::sort(val_idx.begin(), val_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    if (train_idx.empty()) throw std::invalid_argument("no training samples after the validation split");

    const Targets targets = make_targets(model, sequences, outcomes, train_idx, cfg.target_kind);
    const std::size_t batch = std::min(cfg.batch_size, train_idx.size());

    TrainResult result;
    for (std::size_t i : val_idx) result.validation_ids.push_back(sequences.patient_ids[i]);

    AdamState adam;
    const AdamOptions adam_options{cfg.lr};
    const std::size_t before = model.parameter_count();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> perm = train_idx;
        std::shuffle(perm.begin(), perm.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0, b = 0; start < perm.size(); start += batch, ++b) {
            const std::vector<std::size_t> idx(perm.begin() + std::ptrdiff_t(start),
                                               perm.begin() + std::ptrdiff_t(std::min(start + batch, perm.size())));
            Graph g;
            const auto params = bind_parameters(g, model, true);
            double loss_value = 0.0;
            Gradients grads;
            try {
                const auto pass = forward(model, g, params, step_matrices(sequences, idx, targets.input_steps),
                                          Mode::train, &rng);
                const Var loss = mse(pass.prediction, g.constant(rows_of(targets.values, idx)));
                loss_value = g.value(loss)(0, 0);
                grads = g.backward(loss);
            } catch (const std::domain_error& e) {
                throw std::runtime_error("training diverged at epoch " + std::to_string(epoch + 1) + ", batch " +
                                         std::to_string(b + 1) + ": " + e.what());
            }
            std::vector<Matrix> g_list;
            for (Var p : params) g_list.push_back(grads[p]);
            adam_step(model.params(), g_list, adam, adam_options);
            epoch_loss += loss_value * double(idx.size());
        }
        result.loss_history.push_back(epoch_loss / double(perm.size()));
        if (!val_idx.empty()) result.validation_history.push_back(eval_loss(model, sequences, targets, val_idx));
        log::debug(std::string(to_string(model.kind())) + " epoch " + std::to_string(epoch + 1) + " loss " +
                   std::to_string(result.loss_history.back()));
    }
    if (model.parameter_count() != before) throw std::logic_error("parameter count changed during training");
    return result;
}

Matrix predict(const EncoderModel& model, const std::vector<Matrix>& steps) {
    Graph g;
    const auto params = bind_parameters(g, model, false);
    return g.value(forward(model, g, params, steps, Mode::eval).prediction);
}

Matrix predict(const EncoderModel& model, const SequenceTensor& sequences) {
    return predict(model, step_matrices(sequences));
}

Matrix extract_features(const EncoderModel& model, const SequenceTensor& sequences) {
    Graph g;
    const auto params = bind_parameters(g, model, false);
    return g.value(forward(model, g, params, step_matrices(sequences), Mode::eval).features);
}

void save_model(const std::filesystem::path& path, const EncoderModel& model, const nlohmann::json& extra) {
    const EncoderDims& d = model.dims();
    Container c;
    nlohmann::json shapes = nlohmann::json::array();
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        const Matrix& p = model.params()[i];
        shapes.push_back({{"name", model.names()[i]}, {"rows", p.rows()}, {"cols", p.cols()}});
        for (Index r = 0; r < p.rows(); ++r)
            for (Index col = 0; col < p.cols(); ++col) c.payload.push_back(p(r, col));
    }
    c.header = {{"kind", to_string(model.kind())},
                {"dims",
                 {{"features", d.features},
                  {"steps", d.steps},
                  {"hidden", d.hidden},
                  {"outputs", d.outputs},
                  {"targets", d.targets},
                  {"heads", d.heads},
                  {"ffn", d.ffn},
                  {"positional_encoding", d.positional_encoding}}},
                {"dropout_p", model.dropout_p()},
                {"seed", model.seed()},
                {"params", shapes},
                {"cfg", extra}};
    write_container(path, "SQCXMDL1", c);
}

EncoderModel load_model(const std::filesystem::path& path, nlohmann::json* extra) {
    const Container c = read_container(path, "SQCXMDL1");
    const auto& h = c.header;
    const auto& jd = h.at("dims");
    EncoderDims d;
    d.features = jd.at("features");
    d.steps = jd.at("steps");
    d.hidden = jd.at("hidden");
    d.outputs = jd.at("outputs");
    d.targets = jd.at("targets");
    d.heads = jd.at("heads");
    d.ffn = jd.at("ffn");
    d.positional_encoding = jd.at("positional_encoding");
    EncoderModel model(encoder_kind_from_string(h.at("kind").get<std::string>()), d, h.at("dropout_p").get<double>(),
                       h.at("seed").get<std::uint64_t>());
    std::size_t offset = 0;
    const auto& shapes = h.at("params");
    if (shapes.size() != model.params().size()) throw std::runtime_error("checkpoint parameter list mismatch");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        Matrix& p = model.params()[i];
        if (shapes[i].at("name") != model.names()[i] || shapes[i].at("rows") != p.rows() || shapes[i].at("cols") != p.cols()) {
            throw std::runtime_error("checkpoint parameter '" + model.names()[i] + "' has the wrong name or shape");
        }
        if (offset + std::size_t(p.size()) > c.payload.size()) throw std::runtime_error("checkpoint payload truncated");
        for (Index r = 0; r < p.rows(); ++r)
            for (Index col = 0; col < p.cols(); ++col) p(r, col) = c.payload[offset++];
    }
    if (offset != c.payload.size()) throw std::runtime_error("checkpoint payload has trailing values");
    if (extra) *extra = h.at("cfg");
    return model;
}

}  // namespace seqcox
