#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memebg/cli.hpp"
#include "test_support.hpp"

using namespace memebg;
using memebg::testing::read_file;
using memebg::testing::temp_dir;
using memebg::testing::write_file;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

// Generates a dataset and writes a config next to it; returns the config path.
fs::path make_experiment(const fs::path& dir, const std::string& spec, const std::string& train_block) {
    write_file(dir / "spec.json", spec);
    const auto gen = run_cli({"gen", "--spec", (dir / "spec.json").string(), "--seed", "5", "--out", (dir / "data").string()});
    REQUIRE(gen.code == 0);
    write_file(dir / "config.json", R"({"dataset": {"embeddings": "data/embeddings.csv", "labels": "data/labels.csv"},
        "arch": {"trunk_dims": [16]}, "train": )" + train_block + R"(, "split": {"fraction": 0.75, "seed": 3}})");
    return dir / "config.json";
}

}  // namespace

TEST_CASE("gen writes n rows, is byte-identical per seed and validates the spec") {
    const auto dir = temp_dir("cli_gen");
    write_file(dir / "spec.json", R"({"n": 30, "d": 6, "k": 4, "noise_sigma": 0.2, "coupling": 0.7})");
    for (const char* sub : {"a", "b"}) {
        const auto r = run_cli({"gen", "--spec", (dir / "spec.json").string(), "--seed", "11", "--out", (dir / sub).string()});
        REQUIRE(r.code == 0);
    }
    CHECK(line_count(read_file(dir / "a/embeddings.csv")) == 31);
    CHECK(line_count(read_file(dir / "a/labels.csv")) == 31);
    CHECK(read_file(dir / "a/embeddings.csv") == read_file(dir / "b/embeddings.csv"));
    CHECK(read_file(dir / "a/labels.csv") == read_file(dir / "b/labels.csv"));
    CHECK(read_file(dir / "a/labels.csv").rfind("id,te,icm,exp\n", 0) == 0);

    write_file(dir / "bad.json", R"({"n": 30, "d": 4, "k": 8})");
    const auto bad = run_cli({"gen", "--spec", (dir / "bad.json").string(), "--seed", "1", "--out", (dir / "c").string()});
    CHECK(bad.code == 2);
    CHECK(bad.err.find("k must be <= d") != std::string::npos);

    write_file(dir / "typo.json", R"({"n": 30, "noise": 0.1})");
    CHECK(run_cli({"gen", "--spec", (dir / "typo.json").string(), "--seed", "1", "--out", (dir / "c").string()}).code == 2);
}

TEST_CASE("train writes checkpoint, history and manifest deterministically") {
    const auto dir = temp_dir("cli_train");
    const auto config = make_experiment(dir, R"({"n": 60, "d": 8, "k": 4, "noise_sigma": 0.2, "coupling": 0.9})",
                                        R"({"epochs": 4, "seed": 2})");
    const auto a = run_cli({"train", "--config", config.string(), "--mode", "mtl", "--out", (dir / "run_a").string()});
    REQUIRE(a.code == 0);
    const auto b = run_cli({"train", "--config", config.string(), "--out", (dir / "run_b").string(), "--no-timestamp"});
    REQUIRE(b.code == 0);
    CHECK(read_file(dir / "run_a/checkpoint.json") == read_file(dir / "run_b/checkpoint.json"));
    CHECK(read_file(dir / "run_a/history.csv") == read_file(dir / "run_b/history.csv"));
    CHECK(line_count(read_file(dir / "run_a/history.csv")) == 5);

    const auto manifest_a = nlohmann::json::parse(read_file(dir / "run_a/manifest.json"));
    const auto manifest_b = nlohmann::json::parse(read_file(dir / "run_b/manifest.json"));
    CHECK(manifest_a.contains("created_at"));
    CHECK_FALSE(manifest_b.contains("created_at"));
    CHECK(manifest_a.at("outputs") == manifest_b.at("outputs"));
    CHECK(manifest_a.at("inputs").at("embeddings").at("sha256").get<std::string>().size() == 64);
    CHECK(manifest_a.at("seed") == 2);

    const auto stl = run_cli({"train", "--config", config.string(), "--mode", "stl", "--task", "EXP", "--out",
                              (dir / "run_stl").string()});
    CHECK(stl.code == 0);
}

TEST_CASE("train argument contract") {
    const auto dir = temp_dir("cli_train_args");
    const auto config = make_experiment(dir, R"({"n": 30, "d": 6, "k": 4})", R"({"epochs": 1})");
    CHECK(run_cli({"train", "--config", config.string(), "--mode", "stl", "--out", (dir / "o").string()}).code == 2);
    CHECK(run_cli({"train", "--config", config.string(), "--mode", "stl", "--task", "ZP", "--out", (dir / "o").string()}).code == 2);
    CHECK(run_cli({"train", "--config", config.string(), "--mode", "both", "--out", (dir / "o").string()}).code == 2);
    CHECK(run_cli({"train", "--config", (dir / "missing.json").string(), "--out", (dir / "o").string()}).code == 2);
    write_file(dir / "unknown_key.json", R"({"dataset": {"embeddings": "data/embeddings.csv", "labels": "data/labels.csv"}, "optimizer": "adam"})");
    CHECK(run_cli({"train", "--config", (dir / "unknown_key.json").string(), "--out", (dir / "o").string()}).code == 2);
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({"--help"}).code == 0);
}

TEST_CASE("train reports divergence with exit code 3") {
    const auto dir = temp_dir("cli_diverge");
    const auto config = make_experiment(dir, R"({"n": 30, "d": 6, "k": 4})", R"({"epochs": 3, "learning_rate": 1e200})");
    const auto r = run_cli({"train", "--config", config.string(), "--out", (dir / "o").string()});
    CHECK(r.code == 3);
    CHECK(r.err.find("epoch") != std::string::npos);
}

TEST_CASE("eval writes reports and confusion matrices") {
    const auto dir = temp_dir("cli_eval");
    const auto config = make_experiment(dir, R"({"n": 120, "d": 16, "k": 4, "noise_sigma": 0.0, "coupling": 0.5})",
                                        R"({"epochs": 150, "seed": 4})");
    REQUIRE(run_cli({"train", "--config", config.string(), "--out", (dir / "run").string()}).code == 0);
    const auto r = run_cli({"eval", "--checkpoint", (dir / "run/checkpoint.json").string(), "--data",
                            (dir / "data").string(), "--out", (dir / "eval").string()});
    REQUIRE(r.code == 0);
    for (const char* task : {"TE", "ICM", "EXP"}) {
        const auto text = read_file(dir / "eval" / (std::string("report_") + task + ".txt"));
        CHECK(text.find("Class") < text.find("Accuracy"));
        CHECK(text.find("Accuracy") < text.find("Macro Avg"));
        CHECK(text.find("Macro Avg") < text.find("Weighted Avg"));
        const auto json = nlohmann::json::parse(read_file(dir / "eval" / (std::string("report_") + task + ".json")));
        CHECK(json.at("total_support") == 120);
        CHECK(json.at("task") == task);
        CHECK(fs::exists(dir / "eval" / (std::string("confusion_") + task + ".csv")));
    }

    CHECK(run_cli({"eval", "--checkpoint", (dir / "nope.json").string(), "--data", (dir / "data").string(), "--out",
                   (dir / "eval2").string()}).code == 2);

    // Labels file without the EXP column no longer matches the checkpoint's tasks.
    fs::create_directories(dir / "mismatch");
    fs::copy_file(dir / "data/embeddings.csv", dir / "mismatch/embeddings.csv");
    std::string labels = read_file(dir / "data/labels.csv");
    std::string trimmed;
    std::istringstream lines(labels);
    for (std::string line; std::getline(lines, line);) trimmed += line.substr(0, line.rfind(',')) + "\n";
    write_file(dir / "mismatch/labels.csv", trimmed);
    CHECK(run_cli({"eval", "--checkpoint", (dir / "run/checkpoint.json").string(), "--data",
                   (dir / "mismatch").string(), "--out", (dir / "eval3").string()}).code == 2);
}

TEST_CASE("compare identical-method debug flag") {
    const auto dir = temp_dir("cli_compare");
    const auto config = make_experiment(dir, R"({"n": 60, "d": 8, "k": 4, "noise_sigma": 0.3, "coupling": 0.9})",
                                        R"({"epochs": 3})");
    const auto r = run_cli({"compare", "--config", config.string(), "--task", "TE", "--identical", "--out",
                            (dir / "cmp").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("not significant") != std::string::npos);
    const auto doc = nlohmann::json::parse(read_file(dir / "cmp/comparison_TE.json"));
    CHECK(doc.at("folds").size() == 10);
    CHECK(doc.at("t") == 0.0);
    CHECK(doc.at("p_value") == 1.0);
    CHECK(doc.at("alpha") == 0.05);
    CHECK(doc.at("significant") == false);

    CHECK(run_cli({"compare", "--config", config.string(), "--task", "ZP", "--out", (dir / "cmp").string()}).code == 2);
    CHECK(run_cli({"compare", "--config", config.string(), "--task", "TE", "--alpha", "1.5", "--out",
                   (dir / "cmp").string()}).code == 2);
}

TEST_CASE("compare on coupled synthetic data favors MTL") {
    const auto dir = temp_dir("cli_compare_mtl");
    write_file(dir / "spec.json", R"({"n": 100, "d": 64, "k": 8, "noise_sigma": 0.3, "coupling": 0.9})");
    REQUIRE(run_cli({"gen", "--spec", (dir / "spec.json").string(), "--seed", "1", "--out", (dir / "data").string()}).code == 0);
    write_file(dir / "config.json", R"({"dataset": {"embeddings": "data/embeddings.csv", "labels": "data/labels.csv"},
        "compare": {"base_seed": 42}, "output_dir": "out"})");
    const auto r = run_cli({"compare", "--config", (dir / "config.json").string(), "--task", "ICM"});
    REQUIRE(r.code == 0);
    const auto doc = nlohmann::json::parse(read_file(dir / "out/comparison_ICM.json"));
    double mean = 0.0;
    for (const auto& f : doc.at("folds")) mean += f.at("diff").get<double>() / 10.0;
    MESSAGE("mean MTL - STL macro-F1 difference on ICM: " << mean);
    CHECK(mean > 0.0);
    CHECK(fs::exists(dir / "out/verdict_ICM.txt"));
}

TEST_CASE("MEMEBG_THREADS must be a positive integer") {
    const auto dir = temp_dir("cli_threads");
    const auto config = make_experiment(dir, R"({"n": 60, "d": 8, "k": 4, "noise_sigma": 0.3, "coupling": 0.9})",
                                        R"({"epochs": 2})");
    const std::vector<std::string> args{"compare", "--config", config.string(), "--task", "EXP", "--out",
                                        (dir / "cmp").string()};
    for (const char* bad : {"0", "-2", "four", "3x", ""}) {
        ::setenv("MEMEBG_THREADS", bad, 1);
        CHECK_MESSAGE(run_cli(args).code == 2, "MEMEBG_THREADS=" << std::string(bad));
    }
    ::setenv("MEMEBG_THREADS", "1", 1);
    const auto serial = run_cli(args);
    const auto serial_json = read_file(dir / "cmp/comparison_EXP.json");
    ::setenv("MEMEBG_THREADS", "3", 1);
    const auto parallel = run_cli(args);
    ::unsetenv("MEMEBG_THREADS");
    REQUIRE(serial.code == 0);
    REQUIRE(parallel.code == 0);
    CHECK(read_file(dir / "cmp/comparison_EXP.json") == serial_json);
}
