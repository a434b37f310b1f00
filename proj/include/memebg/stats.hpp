#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "memebg/data.hpp"
#include "memebg/train.hpp"

namespace memebg {

// 2 * P(T_df > |t|) through the regularized incomplete beta function.
double student_t_two_sided_p(double t, double df);

// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double x, double a, double b);

struct TTestResult {
    double t = 0.0;
    double p_value = 1.0;
};

// differences[i][j]: replication i, fold j. Dietterich's statistic
// t = d[0][0] / sqrt(mean_i s_i^2) with 5 degrees of freedom.
TTestResult paired_t_5x2(const std::array<std::array<double, 2>, 5>& differences);
// Flat overload: 10 values ordered rep-major (rep 1 fold 1, rep 1 fold 2, ...).
TTestResult paired_t_5x2(const std::vector<double>& differences);

enum class F1Average { Macro, Weighted };
std::string to_string(F1Average avg);
F1Average f1_average_from_string(const std::string& name);

struct FoldRecord {
    int rep = 0;   // 1..5
    int fold = 0;  // 1..2
    double score_a = 0.0;
    double score_b = 0.0;
    double diff = 0.0;  // score_a - score_b
};

struct CvComparison {
    std::string task;
    std::string metric;
    std::vector<FoldRecord> folds;
    double t = 0.0;
    double p_value = 1.0;
    double alpha = 0.05;
    bool significant = false;
    // Mean and std (sample, n-1) of each method's 10 fold scores.
    double mean_a = 0.0, std_a = 0.0, mean_b = 0.0, std_b = 0.0;
    std::vector<std::string> provenance;

    std::string to_json() const;
    std::string verdict() const;
};

// Trains on `train` and returns class predictions for `task` on every row of `eval`.
using Trainer = std::function<std::vector<int>(const EmbeddingDataset& train, const EmbeddingDataset& eval,
                                               const std::string& task, const TrainConfig& config)>;

Trainer mtl_trainer();
Trainer stl_trainer();

struct FiveByTwoOptions {
    double alpha = 0.05;
    F1Average average = F1Average::Macro;
    // Worker threads for the 10 fold runs; 0 = one per replication.
    std::size_t threads = 1;
};

// Replication i (1..5) splits ds 50/50 stratified with Rng(base_seed + i).
// Fold 1 trains on the first half and scores on the second; fold 2 swaps.
// Both trainers of a fold receive config with the same derived seed.
CvComparison run_5x2(const EmbeddingDataset& ds, const Trainer& trainer_a, const Trainer& trainer_b,
                     const std::string& metric_task, const TrainConfig& config, std::uint64_t base_seed,
                     const FiveByTwoOptions& options = {});

}  // namespace memebg
