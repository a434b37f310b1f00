#pragma once

#include <span>
#include <string>
#include <vector>

#include "memebg/numerics.hpp"

namespace memebg {

struct TaskLoss {
    std::string task;
    double value = 0.0;  // mean cross-entropy over the batch, in nats
    Matrix dlogits;      // d value / d logits
};

// Mean softmax cross-entropy via log-sum-exp; dlogits = (softmax - onehot) / n.
TaskLoss softmax_cross_entropy(const Matrix& logits, std::span<const int> labels, std::string task = {});

// Unweighted sum of the task losses.
double joint_loss(std::span<const TaskLoss> losses);
// Weighted sum; weights must match losses in length. All-ones reduces to joint_loss.
double joint_loss(std::span<const TaskLoss> losses, std::span<const double> weights);

}  // namespace memebg
