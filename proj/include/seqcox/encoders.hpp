#pragma once

#include "seqcox/autodiff.hpp"
#include "seqcox/data.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace seqcox {

enum class EncoderKind { lstm, transformer, ssm };

std::string_view to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(std::string_view name);

struct EncoderDims {
    std::size_t features = 10;  ///< F, input features per step
    std::size_t steps = 3;      ///< T, maximum sequence length
    std::size_t hidden = 20;    ///< LSTM units, transformer d_model, or SSM state size
    std::size_t outputs = 8;    ///< M, width of the extracted feature vector
    std::size_t targets = 1;    ///< width of the regression head
    std::size_t heads = 2;      ///< attention heads (transformer)
    std::size_t ffn = 32;       ///< feed-forward width (transformer)
    bool positional_encoding = true;

    bool operator==(const EncoderDims&) const = default;
};

/// Default dimensions for each architecture with the given input width.
EncoderDims default_dims(EncoderKind kind, std::size_t features, std::size_t steps = 3);

/// Named trainable matrices plus the architecture they parameterise. The set of
/// names and their shapes are fixed at construction.
class EncoderModel {
public:
    EncoderModel(EncoderKind kind, EncoderDims dims, double dropout_p, std::uint64_t seed);

    EncoderKind kind() const { return kind_; }
    const EncoderDims& dims() const { return dims_; }
    double dropout_p() const { return dropout_p_; }
    void set_dropout_p(double p);
    std::uint64_t seed() const { return seed_; }

    const std::vector<std::string>& names() const { return names_; }
    std::vector<Matrix>& params() { return params_; }
    const std::vector<Matrix>& params() const { return params_; }
    Matrix& param(std::string_view name);
    const Matrix& param(std::string_view name) const;
    std::size_t parameter_count() const;

    /// Sets every parameter to zero.
    void zero();

private:
    void add(std::string name, Index rows, Index cols, double bound, std::mt19937_64& rng);

    EncoderKind kind_;
    EncoderDims dims_;
    double dropout_p_;
    std::uint64_t seed_;
    std::vector<std::string> names_;
    std::vector<Matrix> params_;
};

enum class Mode { train, eval };

/// Nodes produced by one forward pass over a batch.
struct ForwardPass {
    std::vector<Var> inputs;  ///< per step, batch x F
    Var final_state;          ///< last hidden state (LSTM, SSM) or time-pooled block output (transformer)
    Var features;             ///< batch x M, the representation fed to the Cox model
    Var prediction;           ///< batch x targets
};

/// Binds every parameter as a graph leaf, differentiable or constant.
std::vector<Var> bind_parameters(Graph& g, const EncoderModel& model, bool differentiable);

/// Runs the encoder on `steps` (one batch x F matrix per time step; fewer than
/// dims().steps is allowed). `dropout_rng` must be non-null in train mode.
/// With `differentiable_inputs` the step matrices become variables.
ForwardPass forward(const EncoderModel& model, Graph& g, const std::vector<Var>& params,
                    const std::vector<Matrix>& steps, Mode mode, std::mt19937_64* dropout_rng = nullptr,
                    bool differentiable_inputs = false);

/// Scaled dot-product attention, softmax(q k^T / sqrt(d_k)) v.
Var attention(Var q, Var k, Var v);

/// Sinusoidal positional encoding, steps x width.
Matrix positional_encoding(std::size_t steps, std::size_t width);

/// Inverted-dropout mask: entries are 0 with probability p, else 1/(1-p).
Matrix dropout_mask(Index rows, Index cols, double p, std::mt19937_64& rng);

/// Step matrices (N x F each) of a sequence tensor, optionally restricted to rows `idx`.
std::vector<Matrix> step_matrices(const SequenceTensor& seq);
std::vector<Matrix> step_matrices(const SequenceTensor& seq, const std::vector<std::size_t>& idx,
                                  std::size_t max_steps);

enum class TargetKind { survival_time, next_step };

std::string_view to_string(TargetKind kind);
TargetKind target_kind_from_string(std::string_view name);

struct TrainConfig {
    int epochs = 100;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    double dropout_p = 0.5;
    std::uint64_t seed = 0;
    TargetKind target_kind = TargetKind::survival_time;
    double validation_fraction = 0.2;
};

void validate(const TrainConfig& cfg);
nlohmann::json to_json(const TrainConfig& cfg);

struct TrainResult {
    std::vector<double> loss_history;        ///< mean training loss per epoch
    std::vector<double> validation_history;  ///< eval-mode loss on held-out patients; empty without a split
    std::vector<PatientId> validation_ids;
};

/// Minimises the MSE of the regression head with Adam over shuffled mini-batches.
/// Default target is survival time standardised over the training patients.
TrainResult train_encoder(EncoderModel& model, const SequenceTensor& sequences,
                          const std::vector<SurvivalOutcome>& outcomes, const TrainConfig& cfg);

/// Eval-mode feature vectors, N x M.
Matrix extract_features(const EncoderModel& model, const SequenceTensor& sequences);
/// Eval-mode regression head output, N x targets.
Matrix predict(const EncoderModel& model, const SequenceTensor& sequences);
/// Eval-mode regression head output for raw step matrices.
Matrix predict(const EncoderModel& model, const std::vector<Matrix>& steps);

void save_model(const std::filesystem::path& path, const EncoderModel& model, const nlohmann::json& extra = {});
EncoderModel load_model(const std::filesystem::path& path, nlohmann::json* extra = nullptr);

}  // namespace seqcox
