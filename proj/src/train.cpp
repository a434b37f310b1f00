#include "memebg/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "memebg/errors.hpp"
#include "memebg/loss.hpp"
#include "memebg/metrics.hpp"

namespace memebg {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate must be a finite value >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    arch.validate();
    if (!task_weights.empty()) {
        if (task_weights.size() != arch.tasks.size()) throw ConfigError("task_weights needs one entry per task");
        for (double w : task_weights)
            if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("task weights must be finite and >= 0");
    }
}

ArchConfig arch_for(const EmbeddingDataset& ds, std::vector<std::size_t> trunk_dims) {
    return {ds.dim(), std::move(trunk_dims), ds.schemas};
}

namespace {

// Label columns of ds in arch task order, checking that the schemas agree.
std::vector<const std::vector<int>*> aligned_labels(const EmbeddingDataset& ds, const ArchConfig& arch,
                                                    const char* which) {
    if (ds.dim() != arch.input_dim)
        throw ConfigError(std::string(which) + " dataset has embedding dim " + std::to_string(ds.dim()) +
                          " but the architecture expects " + std::to_string(arch.input_dim));
    std::vector<const std::vector<int>*> cols;
    for (const auto& task : arch.tasks) {
        std::size_t t;
        try {
            t = ds.task_index(task.name);
        } catch (const SchemaError&) {
            throw ConfigError(std::string(which) + " dataset has no labels for task " + task.name);
        }
        if (ds.schemas[t].classes != task.classes)
            throw ConfigError(std::string(which) + " dataset classes for task " + task.name +
                              " differ from the architecture");
        cols.push_back(&ds.labels[t]);
    }
    return cols;
}

struct Evaluation {
    std::vector<double> task_loss;
    double joint = 0.0;
    std::vector<double> accuracy;
    std::vector<double> macro_f1;
};

Evaluation evaluate(const MTLNetwork& net, const EmbeddingDataset& ds,
                    const std::vector<const std::vector<int>*>& labels, const std::vector<double>& weights,
                    bool with_metrics) {
    Evaluation ev;
    const auto out = forward(net, ds.x);
    for (std::size_t t = 0; t < labels.size(); ++t) {
        const auto loss = softmax_cross_entropy(out.logits[t], *labels[t]);
        ev.task_loss.push_back(loss.value);
        ev.joint += weights[t] * loss.value;
        if (with_metrics) {
            const auto pred = argmax_rows(out.logits[t]);
            ev.accuracy.push_back(accuracy(*labels[t], pred));
            ev.macro_f1.push_back(macro_f1(*labels[t], pred, net.arch.tasks[t].num_classes()));
        }
    }
    return ev;
}

}  // namespace

TrainResult train_mtl(const EmbeddingDataset& train_ds, const EmbeddingDataset* val_ds, const TrainConfig& config) {
    config.validate();
    const auto& arch = config.arch;
    const auto train_labels = aligned_labels(train_ds, arch, "training");
    std::vector<const std::vector<int>*> val_labels;
    if (val_ds != nullptr) val_labels = aligned_labels(*val_ds, arch, "validation");
    const std::size_t n = train_ds.size();
    if (n == 0) throw ConfigError("training dataset is empty");

    const std::size_t tasks = arch.tasks.size();
    const std::vector<double> weights =
        config.task_weights.empty() ? std::vector<double>(tasks, 1.0) : config.task_weights;

    Rng init_rng(config.seed);
    Rng order_rng = Rng::derive(config.seed, 1);

    TrainResult result{init_network(arch, init_rng), {}};
    auto& net = result.network;
    auto& history = result.history;
    for (const auto& t : arch.tasks) history.tasks.push_back(t.name);

    Parameters velocity = net.params.zeros_like();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    double best_val = -1.0;
    std::size_t since_best = 0;
    std::vector<int> batch_labels;
    std::vector<std::size_t> batch_rows;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        order_rng.shuffle(order);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            batch_rows.assign(order.begin() + static_cast<long>(start), order.begin() + static_cast<long>(stop));
            const Matrix xb = gather_rows(train_ds.x, batch_rows);
            auto fwd = forward(net, xb);

            std::vector<Matrix> dlogits;
            dlogits.reserve(tasks);
            for (std::size_t t = 0; t < tasks; ++t) {
                batch_labels.clear();
                for (auto r : batch_rows) batch_labels.push_back((*train_labels[t])[r]);
                auto loss = softmax_cross_entropy(fwd.logits[t], batch_labels, arch.tasks[t].name);
                if (!std::isfinite(loss.value)) {
                    std::ostringstream msg;
                    msg << "training diverged at epoch " << epoch << " (learning_rate " << config.learning_rate
                        << "): non-finite loss for task " << arch.tasks[t].name;
                    throw DivergenceError(msg.str());
                }
                if (weights[t] != 1.0)
                    for (double& g : loss.dlogits.data()) g *= weights[t];
                dlogits.push_back(std::move(loss.dlogits));
            }

            const Parameters grads = backward(net, fwd.cache, dlogits);

            // v <- momentum * v - lr * g; theta <- theta + v
            std::vector<Matrix*> theta, vel;
            std::vector<const Matrix*> grad;
            net.params.for_each([&](Matrix& m) { theta.push_back(&m); });
            velocity.for_each([&](Matrix& m) { vel.push_back(&m); });
            grads.for_each([&](const Matrix& m) { grad.push_back(&m); });
            for (std::size_t b = 0; b < theta.size(); ++b) {
                auto p = theta[b]->data();
                auto v = vel[b]->data();
                auto g = grad[b]->data();
                for (std::size_t i = 0; i < p.size(); ++i) {
                    v[i] = config.momentum * v[i] - config.learning_rate * g[i];
                    p[i] += v[i];
                }
            }
            ++history.update_count;
        }

        const auto train_eval = evaluate(net, train_ds, train_labels, weights, false);
        if (!std::isfinite(train_eval.joint) || !net.params.all_finite()) {
            std::ostringstream msg;
            msg << "training diverged at epoch " << epoch << " (learning_rate " << config.learning_rate
                << "): non-finite joint loss";
            throw DivergenceError(msg.str());
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.joint_loss = train_eval.joint;
        rec.task_loss = train_eval.task_loss;
        if (val_ds != nullptr) {
            const auto val_eval = evaluate(net, *val_ds, val_labels, weights, true);
            rec.val_accuracy = val_eval.accuracy;
            rec.val_macro_f1 = val_eval.macro_f1;
        }
        history.epochs.push_back(std::move(rec));

        if (config.patience > 0 && val_ds != nullptr) {
            const auto& f1 = history.epochs.back().val_macro_f1;
            const double mean_f1 = std::accumulate(f1.begin(), f1.end(), 0.0) / static_cast<double>(f1.size());
            if (mean_f1 > best_val) {
                best_val = mean_f1;
                since_best = 0;
            } else if (++since_best >= config.patience) {
                break;
            }
        }
    }
    return result;
}

TrainResult train_stl(const EmbeddingDataset& train_ds, const EmbeddingDataset* val_ds, const std::string& task,
                      const TrainConfig& config) {
    TrainConfig single = config;
    const std::size_t t = config.arch.task_index(task);
    single.arch.tasks = {config.arch.tasks[t]};
    single.task_weights = config.task_weights.empty() ? std::vector<double>{} : std::vector<double>{config.task_weights[t]};
    return train_mtl(train_ds, val_ds, single);
}

std::string history_to_csv(const TrainHistory& history) {
    static const std::vector<std::string> columns = {"TE", "ICM", "EXP"};
    std::ostringstream out;
    out << "epoch,joint_loss";
    for (const auto& c : columns) out << ",loss_" << c;
    for (const auto& c : columns) out << ",val_acc_" << c;
    for (const auto& c : columns) out << ",val_f1_" << c;
    out << '\n';
    out.precision(17);

    auto slot = [&](const std::string& name) -> std::ptrdiff_t {
        for (std::size_t t = 0; t < history.tasks.size(); ++t)
            if (history.tasks[t] == name) return static_cast<std::ptrdiff_t>(t);
        return -1;
    };
    auto cell = [&](const std::vector<double>& values, std::ptrdiff_t t) {
        out << ',';
        if (t >= 0 && static_cast<std::size_t>(t) < values.size()) out << values[static_cast<std::size_t>(t)];
    };
    for (const auto& rec : history.epochs) {
        out << rec.epoch << ',' << rec.joint_loss;
        for (const auto& c : columns) cell(rec.task_loss, slot(c));
        for (const auto& c : columns) cell(rec.val_accuracy, slot(c));
        for (const auto& c : columns) cell(rec.val_macro_f1, slot(c));
        out << '\n';
    }
    return out.str();
}

}  // namespace memebg
