#pragma once

#include "seqcox/classical.hpp"
#include "seqcox/encoders.hpp"
#include "seqcox/simulate.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace seqcox {

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

/// Every recognised key with its default, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Resolved key-value configuration. Unknown keys are rejected.
class PipelineConfig {
public:
    PipelineConfig();

    /// "key = value" lines; '#' starts a comment; blank lines ignored.
    static PipelineConfig parse(std::string_view text);
    static PipelineConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    double number(const std::string& key) const;
    long integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<std::string> list(const std::string& key) const;
    std::uint64_t seed() const;

    std::filesystem::path workdir() const { return get("workdir"); }
    std::vector<EncoderKind> models() const;
    TrainConfig train_config() const;
    CoxOptions cox_options() const;
    SimConfig sim_config() const;

    nlohmann::json to_json() const;

private:
    std::map<std::string, std::string> values_;
};

/// Artifact name of an encoder: lstm, transformer or mamba.
std::string model_label(EncoderKind kind);

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"ingest", "simulate", "train",   "features", "fit-cox", "fit-classical",
                                                    "evaluate", "km",     "explain", "tsne",     "run-all"};
    return names;
}

/// Runs one stage against the workdir. Errors are rethrown as
/// std::runtime_error prefixed with "stage <name>: ".
void run_stage(std::string_view stage, const PipelineConfig& config);

}  // namespace seqcox
