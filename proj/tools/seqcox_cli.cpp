#include "seqcox/log.hpp"
#include "seqcox/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>

int main(int argc, char** argv) {
    if (const char* level = std::getenv("SEQCOX_LOG_LEVEL")) {
        try {
            seqcox::log::set_level(level);
        } catch (const std::exception& e) {
            std::cerr << "seqcox: " << e.what() << '\n';
            return 2;
        }
    }

    CLI::App app{"Sequence-encoder Cox survival pipeline"};
    app.require_subcommand(1, 1);
    std::string config_path;
    app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);

    std::map<std::string, std::optional<std::string>> overrides;
    for (const auto& key : seqcox::config_keys()) {
        std::string desc = key.help;
        if (!key.default_value.empty()) desc += " (default " + key.default_value + ")";
        app.add_option("--" + key.name, overrides[key.name], desc);
    }
    app.fallthrough();
    for (const auto& stage : seqcox::stage_names()) app.add_subcommand(stage);

    CLI11_PARSE(app, argc, argv);

    try {
        seqcox::PipelineConfig config = config_path.empty() ? seqcox::PipelineConfig() : seqcox::PipelineConfig::load(config_path);
        for (const auto& [key, value] : overrides) {
            if (value) config.set(key, *value);
        }
        seqcox::run_stage(app.get_subcommands().front()->get_name(), config);
    } catch (const std::exception& e) {
        std::cerr << "seqcox: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
