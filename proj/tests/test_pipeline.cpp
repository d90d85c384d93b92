#include "seqcox/pipeline.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

using namespace seqcox;
namespace fs = std::filesystem;

namespace {

const fs::path kBladder = fs::path(SEQCOX_DATA_DIR) / "bladder1.csv";

PipelineConfig small_config(const fs::path& workdir) {
    PipelineConfig c;
    c.set("input", kBladder.string());
    c.set("workdir", workdir.string());
    c.set("epochs", "3");
    c.set("lime_samples", "50");
    c.set("lime_max_explanations", "5");
    c.set("tsne_iterations", "250");
    c.set("sim_patients", "20");
    return c;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        out[entry.path().filename().string()] = os.str();
    }
    return out;
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SEQCOX_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("configuration parsing") {
    const PipelineConfig c = PipelineConfig::parse("# comment\n\nepochs = 7\n  models=lstm, ssm  # trailing\nseed=42\n");
    CHECK(c.integer("epochs") == 7);
    CHECK(c.models() == std::vector<EncoderKind>{EncoderKind::lstm, EncoderKind::ssm});
    CHECK(c.seed() == 42);
    CHECK(c.get("ties") == "efron");
    CHECK(c.train_config().epochs == 7);
    CHECK(c.to_json().at("epochs") == "7");

    try {
        (void)PipelineConfig::parse("epochs = 3\ncolour = red\n");
        FAIL("expected an error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
        CHECK(std::string(e.what()).find("colour") != std::string::npos);
    }
    CHECK_THROWS(PipelineConfig::parse("epochs\n"));
    PipelineConfig bad;
    bad.set("epochs", "many");
    CHECK_THROWS(bad.integer("epochs"));
    bad.set("models", "lstm,gru");
    CHECK_THROWS(bad.models());
    CHECK(model_label(EncoderKind::ssm) == "mamba");
}

TEST_CASE("stage errors") {
    const fs::path dir = fs::temp_directory_path() / "seqcox_test_stage_errors";
    fs::remove_all(dir);
    PipelineConfig c = small_config(dir);
    c.set("models", "none");
    CHECK_THROWS_WITH(run_stage("run-all", c), doctest::Contains("nothing to run"));

    const fs::path empty = dir / "empty.csv";
    fs::create_directories(dir);
    std::ofstream(empty).close();
    c = small_config(dir);
    c.set("input", empty.string());
    CHECK_THROWS_WITH(run_stage("ingest", c), doctest::Contains("stage ingest: "));
    CHECK_THROWS(run_stage("predict", c));
    fs::remove_all(dir);
}

TEST_CASE("run-all writes every artifact and reproduces them byte for byte") {
    const fs::path dir = fs::temp_directory_path() / "seqcox_test_run_all";
    fs::remove_all(dir);
    const PipelineConfig c = small_config(dir);
    run_stage("run-all", c);
    const auto first = snapshot(dir);
    for (const char* name : {"sequences.bin", "outcomes.csv", "data_report.json", "model_lstm.bin", "model_transformer.bin", "model_mamba.bin",
                             "features_lstm.csv", "fit_lstm-cox.json", "fit_ag.json", "fit_pwp.json", "fit_wlw.json",
                             "metrics.json", "km_mamba.csv", "lime.jsonl", "lime_freq.json", "saliency.csv",
                             "tsne_transformer.csv"}) {
        CHECK_MESSAGE(first.count(name) == 1, std::string(name));
    }

    const auto metrics = read_json(dir / "metrics.json");
    CHECK(metrics.at("meta").at("config").at("epochs") == "3");
    CHECK(metrics.at("meta").at("input_hash").get<std::string>().size() == 40);
    std::vector<std::string> models;
    for (const auto& row : metrics.at("metrics")) models.push_back(row.at("model"));
    CHECK(models == std::vector<std::string>{"lstm-cox", "transformer-cox", "mamba-cox", "cox", "cox-interval", "ag",
                                             "pwp", "wlw"});

    const auto report = read_json(dir / "data_report.json");
    CHECK(report.at("n_patients") == 118);
    CHECK(report.at("train_ids").size() + report.at("test_ids").size() == 118);

    // Two curves plus the log-rank fields in the header line.
    const std::string km = first.at("km_lstm.csv");
    const auto header = nlohmann::json::parse(km.substr(2, km.find('\n') - 2));
    CHECK(header.contains("logrank_p"));
    CHECK(header.at("n_high").get<int>() + header.at("n_low").get<int>() == int(report.at("train_ids").size()));
    CHECK(km.find(",high\n") != std::string::npos);
    CHECK(km.find(",low\n") != std::string::npos);

    run_stage("run-all", c);
    CHECK(snapshot(dir) == first);
    fs::remove_all(dir);
}

TEST_CASE("simulate stage") {
    const fs::path dir = fs::temp_directory_path() / "seqcox_test_simulate";
    fs::remove_all(dir);
    PipelineConfig c = small_config(dir);
    c.set("input", "");
    run_stage("simulate", c);
    const auto report = read_json(dir / "simulation_report.json");
    CHECK(report.at("meta").at("simulation").at("n_patients") == 20);
    const RecordTable t = load_records(dir / "simulated.csv");
    CHECK(t.patient_ids().size() == 20);
    fs::remove_all(dir);
}

TEST_CASE("run-all on a simulated cohort") {
    const fs::path dir = fs::temp_directory_path() / "seqcox_test_simulated_run";
    fs::remove_all(dir);
    PipelineConfig c = small_config(dir);
    c.set("sim_patients", "50");
    run_stage("simulate", c);
    c.set("input", (dir / "simulated.csv").string());
    c.set("outcome_rule", "first_event");
    run_stage("run-all", c);
    const auto metrics = read_json(dir / "metrics.json");
    std::vector<std::string> models;
    for (const auto& row : metrics.at("metrics")) models.push_back(row.at("model"));
    CHECK(read_json(dir / "data_report.json").at("n_patients") == 50);
    REQUIRE(models.size() >= 3);
    CHECK(std::vector<std::string>(models.begin(), models.begin() + 3) ==
          std::vector<std::string>{"lstm-cox", "transformer-cox", "mamba-cox"});
    fs::remove_all(dir);
}

TEST_CASE("command line") {
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") != 0);
    CHECK(run_cli("ingest --colour red") != 0);
    const fs::path dir = fs::temp_directory_path() / "seqcox_test_cli";
    fs::remove_all(dir);
    CHECK(run_cli("--input " + kBladder.string() + " --workdir " + dir.string() + " ingest") == 0);
    CHECK(fs::exists(dir / "data_report.json"));
    CHECK(run_cli("--input " + (dir / "missing.csv").string() + " --workdir " + dir.string() + " ingest") == 1);
    fs::remove_all(dir);
}
