#include "memebg/experiment.hpp"

#include <array>
#include <memory>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "memebg/errors.hpp"

namespace memebg {

using nlohmann::json;

namespace {

void only_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : obj.items())
        if (!ok.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

const json& require(const json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) throw ConfigError(where + ": missing required key '" + key + "'");
    return obj.at(key);
}

double number(const json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError(where + " must be a number");
    return v.get<double>();
}

std::uint64_t unsigned_int(const json& v, const std::string& where) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
        throw ConfigError(where + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

std::string text(const json& v, const std::string& where) {
    if (!v.is_string() || v.get<std::string>().empty()) throw ConfigError(where + " must be a non-empty string");
    return v.get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& doc, const std::filesystem::path& base_dir) {
    only_keys(doc, "config", {"dataset", "arch", "train", "split", "compare", "output_dir"});
    ExperimentConfig cfg;
    cfg.raw = doc;

    const auto& dataset = require(doc, "dataset", "config");
    only_keys(dataset, "dataset", {"embeddings", "labels"});
    cfg.embeddings = resolve(base_dir, text(require(dataset, "embeddings", "dataset"), "dataset.embeddings"));
    cfg.labels = resolve(base_dir, text(require(dataset, "labels", "dataset"), "dataset.labels"));

    if (doc.contains("arch")) {
        const auto& arch = doc.at("arch");
        only_keys(arch, "arch", {"trunk_dims"});
        if (arch.contains("trunk_dims")) {
            const auto& dims = arch.at("trunk_dims");
            if (!dims.is_array()) throw ConfigError("arch.trunk_dims must be an array");
            cfg.trunk_dims.clear();
            for (const auto& w : dims) {
                const auto width = unsigned_int(w, "arch.trunk_dims[]");
                if (width == 0) throw ConfigError("arch.trunk_dims entries must be >= 1");
                cfg.trunk_dims.push_back(static_cast<std::size_t>(width));
            }
        }
    }

    if (doc.contains("train")) {
        const auto& tr = doc.at("train");
        only_keys(tr, "train",
                  {"learning_rate", "momentum", "epochs", "batch_size", "seed", "task_weights", "patience"});
        if (tr.contains("learning_rate")) {
            cfg.train.learning_rate = number(tr.at("learning_rate"), "train.learning_rate");
            if (!(cfg.train.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
        }
        if (tr.contains("momentum")) cfg.train.momentum = number(tr.at("momentum"), "train.momentum");
        if (tr.contains("epochs")) cfg.train.epochs = unsigned_int(tr.at("epochs"), "train.epochs");
        if (tr.contains("batch_size")) cfg.train.batch_size = unsigned_int(tr.at("batch_size"), "train.batch_size");
        if (tr.contains("seed")) cfg.train.seed = unsigned_int(tr.at("seed"), "train.seed");
        if (tr.contains("patience")) cfg.train.patience = unsigned_int(tr.at("patience"), "train.patience");
        if (tr.contains("task_weights")) {
            const auto& w = tr.at("task_weights");
            if (!w.is_object()) throw ConfigError("train.task_weights must be an object of task -> weight");
            for (const auto& [name, value] : w.items())
                cfg.task_weights.emplace_back(name, number(value, "train.task_weights." + name));
        }
        if (!(cfg.train.momentum >= 0.0 && cfg.train.momentum < 1.0))
            throw ConfigError("train.momentum must lie in [0, 1)");
        if (cfg.train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
        if (cfg.train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    }

    if (doc.contains("split")) {
        const auto& sp = doc.at("split");
        only_keys(sp, "split", {"fraction", "seed"});
        if (sp.contains("fraction")) cfg.split_fraction = number(sp.at("fraction"), "split.fraction");
        if (sp.contains("seed")) cfg.split_seed = unsigned_int(sp.at("seed"), "split.seed");
        if (!(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0))
            throw ConfigError("split.fraction must lie in (0, 1)");
    }

    if (doc.contains("compare")) {
        const auto& cp = doc.at("compare");
        only_keys(cp, "compare", {"base_seed"});
        if (cp.contains("base_seed")) cfg.compare_seed = unsigned_int(cp.at("base_seed"), "compare.base_seed");
    }

    if (doc.contains("output_dir")) cfg.output_dir = resolve(base_dir, text(doc.at("output_dir"), "output_dir"));
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_experiment_config(doc, path.parent_path());
}

TrainConfig ExperimentConfig::train_config_for(const EmbeddingDataset& ds) const {
    TrainConfig tc = train;
    tc.arch = {ds.dim(), trunk_dims, ds.schemas};
    if (!task_weights.empty()) {
        tc.task_weights.assign(ds.schemas.size(), 1.0);
        for (const auto& [name, w] : task_weights) {
            bool found = false;
            for (std::size_t t = 0; t < ds.schemas.size(); ++t)
                if (ds.schemas[t].name == name) {
                    tc.task_weights[t] = w;
                    found = true;
                }
            if (!found) throw ConfigError("train.task_weights names unknown task '" + name + "'");
        }
    }
    tc.validate();
    return tc;
}

SyntheticSpec parse_synthetic_spec(const json& doc) {
    only_keys(doc, "synthetic spec", {"n", "d", "k", "noise_sigma", "coupling", "priors"});
    SyntheticSpec spec;
    if (doc.contains("n")) spec.n = unsigned_int(doc.at("n"), "n");
    if (doc.contains("d")) spec.d = unsigned_int(doc.at("d"), "d");
    if (doc.contains("k")) spec.k = unsigned_int(doc.at("k"), "k");
    if (doc.contains("noise_sigma")) spec.noise_sigma = number(doc.at("noise_sigma"), "noise_sigma");
    if (doc.contains("coupling")) spec.coupling = number(doc.at("coupling"), "coupling");
    if (doc.contains("priors")) {
        const auto& priors = doc.at("priors");
        only_keys(priors, "priors", {"TE", "ICM", "EXP"});
        for (std::size_t t = 0; t < spec.schemas.size(); ++t) {
            const auto& name = spec.schemas[t].name;
            std::vector<double> p;
            if (priors.contains(name)) {
                if (!priors.at(name).is_array()) throw ConfigError("priors." + name + " must be an array");
                for (const auto& v : priors.at(name)) p.push_back(number(v, "priors." + name + "[]"));
            } else {
                p.assign(spec.schemas[t].num_classes(), 1.0 / static_cast<double>(spec.schemas[t].num_classes()));
            }
            spec.class_priors.push_back(std::move(p));
        }
    }
    try {
        spec.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    return spec;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError("cannot read " + path.string() + " for hashing");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest, &len);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

}  // namespace memebg
