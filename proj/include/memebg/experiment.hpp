#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "memebg/data.hpp"
#include "memebg/train.hpp"

namespace memebg {

// Parsed experiment config (schemas/experiment_config.schema.json). Relative
// dataset paths are resolved against the config file's directory.
struct ExperimentConfig {
    std::filesystem::path embeddings;
    std::filesystem::path labels;
    std::vector<std::size_t> trunk_dims{256};
    TrainConfig train;
    // Task name -> weight, applied once the dataset's task list is known.
    std::vector<std::pair<std::string, double>> task_weights;
    double split_fraction = 0.75;
    std::uint64_t split_seed = 0;
    std::uint64_t compare_seed = 0;
    std::optional<std::filesystem::path> output_dir;
    nlohmann::json raw;

    // TrainConfig with the architecture filled in for ds.
    TrainConfig train_config_for(const EmbeddingDataset& ds) const;
};

// Throws ConfigError on any schema violation, before touching the dataset.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

SyntheticSpec parse_synthetic_spec(const nlohmann::json& doc);

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace memebg
