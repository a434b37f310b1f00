#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "memebg/data.hpp"
#include "memebg/model.hpp"

namespace memebg {

struct TrainConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    ArchConfig arch;
    // Per-task multipliers on the joint loss; empty means 1.0 for every task.
    std::vector<double> task_weights;
    // Stop after this many epochs without validation macro-F1 improvement; 0 = off.
    std::size_t patience = 0;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double joint_loss = 0.0;
    std::vector<double> task_loss;
    // Empty when no validation set was supplied.
    std::vector<double> val_accuracy;
    std::vector<double> val_macro_f1;
};

struct TrainHistory {
    std::vector<std::string> tasks;
    std::vector<EpochRecord> epochs;
    std::size_t update_count = 0;
};

struct TrainResult {
    MTLNetwork network;
    TrainHistory history;
};

// Minibatch SGD with momentum on the (weighted) joint cross-entropy.
// Initialisation draws from Rng(seed); minibatch order from a separate
// stream derived from the same seed, so networks with different head sets
// see identical sample orders. Epoch losses are full passes over train_ds
// after the epoch's updates.
TrainResult train_mtl(const EmbeddingDataset& train_ds, const EmbeddingDataset* val_ds, const TrainConfig& config);

// Same loop with the architecture reduced to the named task.
TrainResult train_stl(const EmbeddingDataset& train_ds, const EmbeddingDataset* val_ds, const std::string& task,
                      const TrainConfig& config);

// Architecture over all tasks of a dataset with the given trunk.
ArchConfig arch_for(const EmbeddingDataset& ds, std::vector<std::size_t> trunk_dims = {256});

// History CSV with fixed TE/ICM/EXP columns; tasks absent from the run and
// validation columns without a validation set are left empty.
std::string history_to_csv(const TrainHistory& history);

}  // namespace memebg
