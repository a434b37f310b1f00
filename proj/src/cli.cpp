#include "memebg/cli.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string_view>
#include <system_error>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "memebg/data.hpp"
#include "memebg/errors.hpp"
#include "memebg/experiment.hpp"
#include "memebg/metrics.hpp"
#include "memebg/model.hpp"
#include "memebg/stats.hpp"
#include "memebg/train.hpp"

namespace memebg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArgumentError("cannot write " + path.string());
    out << content;
    if (!out) throw ArgumentError("write failed for " + path.string());
}

fs::path prepare_out_dir(const std::string& flag, const std::optional<fs::path>& fallback) {
    fs::path dir = !flag.empty() ? fs::path(flag) : fallback.value_or(fs::path{});
    if (dir.empty()) throw ConfigError("no output directory: pass --out or set output_dir in the config");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ArgumentError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::size_t compare_threads() {
    if (const char* env = std::getenv("MEMEBG_THREADS")) {
        const std::string_view text(env);
        std::size_t v = 0;
        const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec == std::errc{} && end == text.data() + text.size() && v > 0) return v;
        throw ConfigError("MEMEBG_THREADS must be a positive integer");
    }
    return 5;  // one per replication
}

// ---------------------------------------------------------------------------

int cmd_gen(const std::string& spec_path, std::uint64_t seed, const std::string& out_flag, std::ostream& out) {
    std::ifstream in(spec_path);
    if (!in) throw ConfigError("cannot open spec " + spec_path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("spec " + spec_path + " is not valid JSON: " + e.what());
    }
    const auto spec = parse_synthetic_spec(doc);
    const auto dir = prepare_out_dir(out_flag, std::nullopt);
    Rng rng(seed);
    const auto ds = generate_synthetic(spec, rng);
    save_dataset(ds, dir / "embeddings.csv", dir / "labels.csv");
    out << "wrote " << ds.size() << " samples (d=" << ds.dim() << ") to " << dir.string() << '\n';
    return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& mode, const std::string& task,
              const std::string& out_flag, bool no_timestamp, std::ostream& out) {
    if (mode != "mtl" && mode != "stl") throw ConfigError("--mode must be mtl or stl");
    if (mode == "stl" && task.empty()) throw ConfigError("--task is required with --mode stl");
    if (mode == "mtl" && !task.empty()) throw ConfigError("--task is only valid with --mode stl");

    const auto cfg = load_experiment_config(config_path);
    const auto ds = load_dataset(cfg.embeddings, cfg.labels);
    const auto tc = cfg.train_config_for(ds);
    if (mode == "stl") tc.arch.task_index(task);
    const auto dir = prepare_out_dir(out_flag, cfg.output_dir);

    Rng split_rng(cfg.split_seed);
    const auto split = stratified_split(ds, cfg.split_fraction, split_rng);
    const auto result = mode == "mtl" ? train_mtl(split.train, &split.test, tc)
                                      : train_stl(split.train, &split.test, task, tc);

    const auto checkpoint = dir / "checkpoint.json";
    const auto history = dir / "history.csv";
    save_network(result.network, checkpoint);
    write_text(history, history_to_csv(result.history));

    json manifest = {
        {"command", "train"},
        {"mode", mode},
        {"task", task.empty() ? json(nullptr) : json(task)},
        {"config", cfg.raw},
        {"seed", tc.seed},
        {"split", {{"fraction", cfg.split_fraction}, {"seed", cfg.split_seed}, {"train", split.train.size()},
                   {"test", split.test.size()}}},
        {"updates", result.history.update_count},
        {"inputs", {{"embeddings", {{"path", cfg.embeddings.string()}, {"sha256", sha256_file(cfg.embeddings)}}},
                    {"labels", {{"path", cfg.labels.string()}, {"sha256", sha256_file(cfg.labels)}}}}},
        {"outputs", {{"checkpoint", sha256_file(checkpoint)}, {"history", sha256_file(history)}}},
    };
    if (!no_timestamp) manifest["created_at"] = utc_timestamp();
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    const auto& last = result.history.epochs.back();
    out << mode << " training finished after " << result.history.epochs.size() << " epochs, joint loss "
        << last.joint_loss << "; outputs in " << dir.string() << '\n';
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir, const std::string& out_flag,
             std::ostream& out) {
    if (!fs::exists(checkpoint_path)) throw ConfigError("checkpoint " + checkpoint_path + " does not exist");
    const auto net = load_network(checkpoint_path);
    const fs::path data(data_dir);
    const auto ds = load_dataset(data / "embeddings.csv", data / "labels.csv", net.arch.tasks);
    if (ds.dim() != net.arch.input_dim)
        throw SchemaError("dataset embedding dim " + std::to_string(ds.dim()) + " does not match checkpoint input_dim " +
                          std::to_string(net.arch.input_dim));
    const auto dir = prepare_out_dir(out_flag, std::nullopt);

    const auto predictions = predict(net, ds.x);
    for (std::size_t t = 0; t < net.arch.tasks.size(); ++t) {
        const auto& schema = net.arch.tasks[t];
        const auto cm = confusion(ds.labels[t], predictions[t], schema.num_classes(), schema.classes);
        const auto rep = report(cm, schema.name);
        write_text(dir / ("report_" + schema.name + ".txt"), render_report_text(rep));
        write_text(dir / ("report_" + schema.name + ".json"), report_to_json(rep));
        write_text(dir / ("confusion_" + schema.name + ".csv"), confusion_to_csv(cm));
        out << render_report_text(rep) << '\n';
    }
    return kExitOk;
}

int cmd_compare(const std::string& config_path, const std::string& task, double alpha,
                const std::string& metric, bool identical, const std::string& out_flag, std::ostream& out) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("--alpha must lie in (0, 1)");
    const auto cfg = load_experiment_config(config_path);
    const auto ds = load_dataset(cfg.embeddings, cfg.labels);
    const auto tc = cfg.train_config_for(ds);
    try {
        tc.arch.task_index(task);
    } catch (const ConfigError&) {
        throw ConfigError("unknown task '" + task + "'");
    }
    const auto dir = prepare_out_dir(out_flag, cfg.output_dir);

    FiveByTwoOptions options;
    options.alpha = alpha;
    options.average = f1_average_from_string(metric);
    options.threads = compare_threads();

    const Trainer a = mtl_trainer();
    const Trainer b = identical ? mtl_trainer() : stl_trainer();
    auto cmp = run_5x2(ds, a, b, task, tc, cfg.compare_seed, options);
    if (identical) cmp.provenance.push_back("debug: method B is the same MTL trainer as method A");

    write_text(dir / ("comparison_" + task + ".json"), cmp.to_json());
    write_text(dir / ("verdict_" + task + ".txt"), cmp.verdict() + "\n");
    out << cmp.verdict() << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-task embedding classifier for blastocyst grading", "memebg"};
    app.require_subcommand(1);

    std::string spec_path, config_path, out_dir, mode = "mtl", task, checkpoint, data_dir, metric = "macro";
    std::uint64_t seed = 0;
    double alpha = 0.05;
    bool no_timestamp = false, identical = false;

    auto* gen = app.add_subcommand("gen", "Generate a synthetic embeddings/labels dataset");
    gen->add_option("--spec", spec_path, "SyntheticSpec JSON")->required();
    gen->add_option("--seed", seed, "RNG seed")->required();
    gen->add_option("--out", out_dir, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Train an MTL or STL network");
    train->add_option("--config", config_path, "Experiment config JSON")->required();
    train->add_option("--mode", mode, "mtl or stl")->check(CLI::IsMember({"mtl", "stl"}));
    train->add_option("--task", task, "Task for stl mode");
    train->add_option("--out", out_dir, "Output directory (defaults to output_dir in the config)");
    train->add_flag("--no-timestamp", no_timestamp, "Omit created_at from the run manifest");

    auto* eval = app.add_subcommand("eval", "Classification reports and confusion matrices for a checkpoint");
    eval->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
    eval->add_option("--data", data_dir, "Directory with embeddings.csv and labels.csv")->required();
    eval->add_option("--out", out_dir, "Output directory")->required();

    auto* compare = app.add_subcommand("compare", "5x2 cross-validated paired t-test, MTL vs STL");
    compare->add_option("--config", config_path, "Experiment config JSON")->required();
    compare->add_option("--task", task, "Task to score")->required();
    compare->add_option("--alpha", alpha, "Significance level")->capture_default_str();
    compare->add_option("--metric", metric, "macro or weighted F1")->check(CLI::IsMember({"macro", "weighted"}));
    compare->add_flag("--identical", identical, "Debug: compare MTL against itself");
    compare->add_option("--out", out_dir, "Output directory (defaults to output_dir in the config)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen(spec_path, seed, out_dir, out);
        if (train->parsed()) return cmd_train(config_path, mode, task, out_dir, no_timestamp, out);
        if (eval->parsed()) return cmd_eval(checkpoint, data_dir, out_dir, out);
        if (compare->parsed()) return cmd_compare(config_path, task, alpha, metric, identical, out_dir, out);
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace memebg::cli
