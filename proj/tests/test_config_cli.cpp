#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sdgn/config.hpp"

using namespace sdgn;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test, removed on teardown.
class CliTest: public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path()/("sdgn_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        write("small.json", R"({"synth": {"num_nodes": 6, "duration": 120}, "train": {"epochs": 3}})");
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path path(const std::string& name) const { return dir_/name; }

    void write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name)) << text;
    }

    std::string read(const std::string& name) const {
        std::ifstream in(path(name), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        return s.str();
    }

    std::size_t lines(const std::string& name) const {
        const auto text = read(name);
        return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
    }

    // Runs the CLI inside the scratch directory and returns its exit status.
    int run(const std::string& args, const std::string& env = "") const {
        const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" SDGN_CLI_PATH "' " + args + " > log.txt 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status)? WEXITSTATUS(status): -1;
    }

    fs::path dir_;
};

}

// configuration

TEST(Config, DefaultsValidate) {
    EXPECT_NO_THROW(RunConfig{}.validate());
}

TEST(Config, UnknownKeysRejected) {
    EXPECT_THROW(config_from_json(json::parse(R"({"synth": {"nodes": 3}})")), validation_error);
    EXPECT_THROW(config_from_json(json::parse(R"({"colour": "red"})")), validation_error);
}

TEST(Config, RoundTripPreservesDigest) {
    RunConfig c;
    c.seed = 77;
    c.synth.num_nodes = 13;
    c.graph.windows = 4;
    c.train.step = 0.05;
    const auto back = config_from_json(json::parse(config_to_json(c).dump()));
    EXPECT_EQ(config_digest(back), config_digest(c));
    EXPECT_EQ(back.synth.num_nodes, 13u);
    c.train.step = 0.06;
    EXPECT_NE(config_digest(back), config_digest(c));
}

TEST(Config, InvalidValuesRejected) {
    EXPECT_THROW(config_from_json(json::parse(R"({"synth": {"sparsity": 1.5}})")).validate(), validation_error);
    EXPECT_THROW(config_from_json(json::parse(R"({"train_fraction": 1.0})")).validate(), validation_error);
    EXPECT_THROW(config_from_json(json::parse(R"({"synth": {"kernel": "sideways"}})")), validation_error);
}

// command line

TEST_F(CliTest, GenerateIsByteIdenticalOnRerun) {
    ASSERT_EQ(run("generate --config small.json --seed 4 --out a"), 0);
    ASSERT_EQ(run("generate --config small.json --seed 4 --out b"), 0);
    EXPECT_EQ(read("a/events.jsonl"), read("b/events.jsonl"));
    EXPECT_EQ(read("a/graph.jsonl"), read("b/graph.jsonl"));
    EXPECT_EQ(read("a/config.json"), read("b/config.json"));
    ASSERT_EQ(run("generate --config small.json --seed 5 --out c"), 0);
    EXPECT_NE(read("a/events.jsonl"), read("c/events.jsonl"));
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
    write("seeded.json", R"({"seed": 9, "synth": {"num_nodes": 6, "duration": 50}})");
    ASSERT_EQ(run("generate --config seeded.json --out a"), 0);
    ASSERT_EQ(run("generate --config seeded.json --seed 2 --nodes 3 --out b"), 0);
    const auto a = json::parse(read("a/config.json")), b = json::parse(read("b/config.json"));
    EXPECT_EQ(a["config"]["seed"], 9);
    EXPECT_EQ(a["config"]["synth"]["num_nodes"], 6);
    EXPECT_EQ(b["config"]["seed"], 2);
    EXPECT_EQ(b["config"]["synth"]["num_nodes"], 3);
    EXPECT_EQ(b["config"]["synth"]["duration"], 50.0);
}

TEST_F(CliTest, SingleNodeWithoutEdgesIsOneStream) {
    ASSERT_EQ(run("generate --nodes 1 --sparsity 0 --duration 100 --seed 1 --out g"), 0);
    const auto header = json::parse(read("g/events.jsonl").substr(0, read("g/events.jsonl").find('\n')));
    EXPECT_EQ(header["num_types"], 1);
    EXPECT_GT(lines("g/events.jsonl"), 20u);
}

TEST_F(CliTest, ExitCodesSeparateValidationFromRuntime) {
    write("bad.json", R"({"synth": {"bogus": 1}})");
    EXPECT_EQ(run("generate --config bad.json --out x"), 2);
    EXPECT_EQ(run("generate --sparsity 2 --out x"), 2);
    EXPECT_EQ(run("nonsense"), 2);
    EXPECT_EQ(run("sweep --config small.json --seeds 1 --out y", "SDGN_THREADS=zero"), 2);
    EXPECT_EQ(run("train --config small.json --events missing.jsonl --out z"), 3);
    EXPECT_NE(read("log.txt").find("missing.jsonl"), std::string::npos);
}

TEST_F(CliTest, PipelineCommandsProduceTheirArtifacts) {
    ASSERT_EQ(run("generate --config small.json --seed 2 --out gen"), 0);
    ASSERT_EQ(run("estimate-graph --config small.json --seed 2 --events gen/events.jsonl --graph gen/graph.jsonl --out est"), 0);
    EXPECT_TRUE(fs::exists(path("est/graph_estimate.jsonl")));
    const auto ssi = json::parse(read("est/ssi.json"));
    EXPECT_GE(ssi["ssi"].get<double>(), -1.0);
    EXPECT_LE(ssi["ssi"].get<double>(), 1.0);

    ASSERT_EQ(run("train --config small.json --seed 2 --events gen/events.jsonl --out tr"), 0);
    ASSERT_TRUE(fs::exists(path("tr/checkpoint.json")));
    ASSERT_EQ(run("predict --config small.json --seed 2 --events gen/events.jsonl --checkpoint tr/checkpoint.json --out pr"), 0);
    EXPECT_GT(lines("pr/predictions.jsonl"), 1u);

    ASSERT_EQ(run("evaluate --config small.json --seed 2 --events gen/events.jsonl --checkpoint tr/checkpoint.json --graph gen/graph.jsonl --out ev"), 0);
    const auto report = json::parse(read("ev/report.jsonl"));
    for (const char* key: {"rmse", "nll", "ssi", "seed", "config_digest"}) EXPECT_TRUE(report.contains(key)) << key;
    EXPECT_TRUE(report["rmse"].is_number());
    EXPECT_TRUE(json::parse(read("ev/timing.jsonl").substr(0, read("ev/timing.jsonl").find('\n'))).contains("runtime_seconds"));

    // Reports are appended, never rewritten.
    const auto first = read("ev/report.jsonl");
    ASSERT_EQ(run("evaluate --config small.json --seed 2 --events gen/events.jsonl --checkpoint tr/checkpoint.json --graph gen/graph.jsonl --out ev"), 0);
    EXPECT_EQ(lines("ev/report.jsonl"), 2u);
    EXPECT_EQ(read("ev/report.jsonl").substr(0, first.size()), first);
}

TEST_F(CliTest, CheckpointRejectsDifferentConfig) {
    ASSERT_EQ(run("generate --config small.json --seed 2 --out gen"), 0);
    ASSERT_EQ(run("train --config small.json --seed 2 --events gen/events.jsonl --out tr"), 0);
    write("other.json", R"({"synth": {"num_nodes": 6, "duration": 120}, "train": {"epochs": 4}})");
    EXPECT_EQ(run("evaluate --config other.json --seed 2 --events gen/events.jsonl --checkpoint tr/checkpoint.json --out ev"), 2);
}

TEST_F(CliTest, AblateEmitsFiveReports) {
    ASSERT_EQ(run("generate --config small.json --seed 3 --out gen"), 0);
    ASSERT_EQ(run("ablate --config small.json --seed 3 --events gen/events.jsonl --graph gen/graph.jsonl --out ab"), 0);
    ASSERT_EQ(lines("ab/report.jsonl"), 5u);
    std::istringstream in(read("ab/report.jsonl"));
    std::vector<std::string> models;
    for (std::string line; std::getline(in, line);) models.push_back(json::parse(line)["model"]);
    EXPECT_EQ(models, (std::vector<std::string>{"sdgn/full", "sdgn/random", "sdgn/spatial_only", "poisson", "hawkes"}));
}

TEST_F(CliTest, SweepCoversTheGridAndIgnoresThreadCount) {
    const std::string args = "sweep --config small.json --seed 1 --nodes 4,6 --sparsity 0.2,0.5 --seeds 2 --duration 60 --out ";
    ASSERT_EQ(run(args + "one", "SDGN_THREADS=1"), 0);
    ASSERT_EQ(run(args + "two", "SDGN_THREADS=3"), 0);
    EXPECT_EQ(lines("one/report.jsonl"), 2u*2u*2u);
    EXPECT_EQ(read("one/report.jsonl"), read("two/report.jsonl"));
    EXPECT_EQ(read("one/fig2a.csv"), read("two/fig2a.csv"));
    EXPECT_EQ(lines("one/fig2a.csv"), 1u + 4u);
}
