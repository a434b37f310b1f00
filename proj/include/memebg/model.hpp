#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "memebg/data.hpp"
#include "memebg/numerics.hpp"

namespace memebg {

// Shared fully connected trunk (affine + ReLU per layer) feeding one linear
// head per task.
struct ArchConfig {
    std::size_t input_dim = 0;
    std::vector<std::size_t> trunk_dims{256};
    std::vector<TaskSchema> tasks;

    void validate() const;
    std::size_t trunk_output_dim() const noexcept {
        return trunk_dims.empty() ? input_dim : trunk_dims.back();
    }
    std::size_t task_index(const std::string& name) const;

    friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct Dense {
    Matrix w;  // fan_in x fan_out
    Matrix b;  // 1 x fan_out
};

// Parameter blocks, also used for gradients and optimizer state.
struct Parameters {
    std::vector<Dense> trunk;
    std::vector<Dense> heads;  // same order as ArchConfig::tasks

    std::size_t count() const noexcept;
    bool all_finite() const noexcept;
    // Zero-filled blocks with identical shapes.
    Parameters zeros_like() const;

    // Every matrix in a fixed order: trunk (w, b)..., heads (w, b)...
    template <typename Fn>
    void for_each(Fn&& fn) {
        for (auto& l : trunk) { fn(l.w); fn(l.b); }
        for (auto& l : heads) { fn(l.w); fn(l.b); }
    }
    template <typename Fn>
    void for_each(Fn&& fn) const {
        for (const auto& l : trunk) { fn(l.w); fn(l.b); }
        for (const auto& l : heads) { fn(l.w); fn(l.b); }
    }
};

struct MTLNetwork {
    ArchConfig arch;
    Parameters params;
};

struct ForwardCache {
    Matrix input;
    std::vector<Matrix> pre;  // per trunk layer, before ReLU
    std::vector<Matrix> act;  // per trunk layer, after ReLU
    const Matrix& trunk_output() const noexcept { return act.empty() ? input : act.back(); }
};

struct ForwardResult {
    std::vector<Matrix> logits;  // one n x C_t matrix per task
    ForwardCache cache;
};

// W ~ N(0, 2 / fan_in), b = 0. Trunk layers draw first, then heads in task order.
MTLNetwork init_network(const ArchConfig& arch, Rng& rng);

ForwardResult forward(const MTLNetwork& net, const Matrix& x_batch);

// Gradients for every parameter block. Trunk gradients accumulate the
// contribution of every head.
Parameters backward(const MTLNetwork& net, const ForwardCache& cache, std::span<const Matrix> dlogits);

// Argmax per row; ties go to the lowest index.
std::vector<int> argmax_rows(const Matrix& logits);
std::vector<std::vector<int>> predict(const MTLNetwork& net, const Matrix& x_batch);

// JSON checkpoint, format_version 1.
void save_network(const MTLNetwork& net, const std::filesystem::path& path);
MTLNetwork load_network(const std::filesystem::path& path);
std::string network_to_json(const MTLNetwork& net);
MTLNetwork network_from_json(const std::string& text);

}  // namespace memebg
