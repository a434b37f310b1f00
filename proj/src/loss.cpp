#include "memebg/loss.hpp"

#include <algorithm>
#include <cmath>

#include "memebg/errors.hpp"

namespace memebg {

TaskLoss softmax_cross_entropy(const Matrix& logits, std::span<const int> labels, std::string task) {
    const std::size_t n = logits.rows();
    const std::size_t classes = logits.cols();
    if (n == 0) throw ArgumentError("softmax_cross_entropy: empty batch");
    if (labels.size() != n)
        throw ArgumentError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(n) + " rows");

    TaskLoss out{std::move(task), 0.0, Matrix(n, classes)};
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw ArgumentError("softmax_cross_entropy: label " + std::to_string(y) + " out of range for " +
                                std::to_string(classes) + " classes");
        auto z = logits.row(i);
        const double peak = *std::max_element(z.begin(), z.end());
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - peak);
        const double log_sum = std::log(sum);
        total += log_sum - (z[static_cast<std::size_t>(y)] - peak);

        auto g = out.dlogits.row(i);
        for (std::size_t c = 0; c < classes; ++c) g[c] = std::exp(z[c] - peak - log_sum);
        g[static_cast<std::size_t>(y)] -= 1.0;
        for (double& v : g) v *= inv_n;
    }
    out.value = total * inv_n;
    return out;
}

double joint_loss(std::span<const TaskLoss> losses) {
    if (losses.empty()) throw ArgumentError("joint_loss: no task losses");
    double sum = 0.0;
    for (const auto& l : losses) sum += l.value;
    return sum;
}

double joint_loss(std::span<const TaskLoss> losses, std::span<const double> weights) {
    if (losses.empty()) throw ArgumentError("joint_loss: no task losses");
    if (weights.size() != losses.size()) throw ArgumentError("joint_loss: one weight per task loss is required");
    double sum = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) sum += weights[i] * losses[i].value;
    return sum;
}

}  // namespace memebg
