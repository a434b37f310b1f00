#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "memebg/numerics.hpp"

namespace memebg {

struct TaskSchema {
    std::string name;
    std::vector<std::string> classes;

    std::size_t num_classes() const noexcept { return classes.size(); }
    // Index of a class label; throws SchemaError for unknown labels.
    int class_index(const std::string& label) const;
    void validate() const;

    friend bool operator==(const TaskSchema&, const TaskSchema&) = default;
};

// TE [A,B], ICM [A,B], EXP [0,1,2], in that order.
std::vector<TaskSchema> default_schemas();

// Samples with embeddings and one label column per task. labels[t][j] is the
// class index of sample j under schemas[t].
struct EmbeddingDataset {
    std::vector<std::string> ids;
    Matrix x;
    std::vector<TaskSchema> schemas;
    std::vector<std::vector<int>> labels;

    std::size_t size() const noexcept { return ids.size(); }
    std::size_t dim() const noexcept { return x.cols(); }

    // Position of a task in schemas, or throws SchemaError.
    std::size_t task_index(const std::string& name) const;

    // Checks every invariant (unique ids, aligned lengths, labels in range).
    void validate() const;

    // Rows in the given order.
    EmbeddingDataset subset(const std::vector<std::size_t>& rows) const;
    // Same samples restricted to the named tasks, in the given order.
    EmbeddingDataset select_tasks(const std::vector<std::string>& names) const;
};

EmbeddingDataset load_dataset(const std::filesystem::path& embeddings_csv,
                              const std::filesystem::path& labels_csv,
                              const std::vector<TaskSchema>& schemas = default_schemas());

// Embeddings are written as 32-bit floats in shortest round-trip form.
void save_dataset(const EmbeddingDataset& ds, const std::filesystem::path& embeddings_csv,
                  const std::filesystem::path& labels_csv);

struct Split {
    EmbeddingDataset train;
    EmbeddingDataset test;
};

// Stratified on the joint label tuple across all tasks. Each tuple with count
// c >= 2 sends floor(fraction * c) samples to train; the remaining quota up to
// floor(fraction * n) is handed out one sample per tuple by descending
// fractional remainder (ties by tuple order). Tuples seen once go to train.
// Both halves keep the original sample order.
Split stratified_split(const EmbeddingDataset& ds, double fraction, Rng& rng);

// Number of joint label tuples that occur exactly once.
std::size_t count_singleton_tuples(const EmbeddingDataset& ds);

struct SyntheticSpec {
    std::size_t n = 300;
    std::size_t d = 64;
    std::size_t k = 8;
    double noise_sigma = 0.3;
    double coupling = 0.9;
    std::vector<TaskSchema> schemas = default_schemas();
    // One prior vector per schema; empty means uniform.
    std::vector<std::vector<double>> class_priors;

    void validate() const;
    // Priors for task t, uniform when not supplied.
    std::vector<double> priors_for(std::size_t t) const;
};

// Latent z ~ N(0, I_k). Task t scores z against a unit direction w_t; the
// directions share a common component so that cos(w_s, w_t) = coupling for
// every pair. The score is bucketed at inverse-normal quantiles of the
// cumulative class priors. Embeddings are x = A z + noise with A a seeded
// d x k Gaussian map (entries N(0, 1/k)).
//
// Draw order from rng: A, the orthonormal basis behind the directions, then
// per sample z followed by the noise vector.
EmbeddingDataset generate_synthetic(const SyntheticSpec& spec, Rng& rng);

// Inverse of the standard normal CDF on (0, 1).
double inverse_normal_cdf(double p);

}  // namespace memebg
