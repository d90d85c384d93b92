#pragma once

#include "seqcox/encoders.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace seqcox {

/// Maps a batch of flattened T*F inputs (one per row, step-major) to one scalar per row.
using ScalarModel = std::function<Vector(const Matrix&)>;

/// Regression-head output of an encoder, first target column.
ScalarModel encoder_scalar_model(const EncoderModel& model);

/// Row i is sample i's T x F block flattened step-major.
Matrix flatten(const SequenceTensor& seq);

/// "name_t<step>" for every step and feature, step-major.
std::vector<std::string> flat_feature_names(const std::vector<std::string>& features, std::size_t steps);

struct LimeConfig {
    std::size_t n_samples = 1000;
    double kernel_width = 0.0;  ///< <= 0 selects 0.75 * sqrt(T*F)
    double ridge_lambda = 1e-3;
    std::uint64_t seed = 0;
};

struct Explanation {
    std::size_t sample_id = 0;
    std::vector<std::string> names;
    Vector weights;
    double intercept = 0.0;
    double local_fit_r2 = 0.0;

    nlohmann::json to_json() const;
};

/// Local weighted ridge surrogate around `x`. Perturbations resample each
/// coordinate independently from the background rows; the generator is
/// seeded with cfg.seed + sample_id.
Explanation lime_explain(const ScalarModel& model, const Vector& x, const Matrix& background,
                         const std::vector<std::string>& names, const LimeConfig& cfg, std::size_t sample_id = 0);

/// How often each feature ranks in the top_k by |weight|; ties keep name order.
std::map<std::string, std::size_t> feature_frequency(const std::vector<Explanation>& explanations, std::size_t top_k);

/// Sums counts over time steps: "stop_t2" and "stop_t0" both count for "stop".
std::map<std::string, std::size_t> aggregate_by_feature(const std::map<std::string, std::size_t>& counts);

struct SaliencyReport {
    Matrix avg_gradients;  ///< T x F, mean |d sum(final state) / d x_t|
    std::vector<std::string> feature_names;
    std::map<std::string, std::size_t> max_feature_counts;
};

SaliencyReport gradient_saliency(const EncoderModel& model, const SequenceTensor& sequences);

/// Header "step,<features>" then one row per time step.
std::string format_saliency(const SaliencyReport& report);

}  // namespace seqcox
