#include "memebg/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "memebg/errors.hpp"
#include "memebg/metrics.hpp"

namespace memebg {

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double x, double a, double b) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double regularized_incomplete_beta(double x, double a, double b) {
    if (!(a > 0.0 && b > 0.0)) throw ArgumentError("incomplete beta: a and b must be > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw ArgumentError("incomplete beta: x must lie in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(x, a, b) / a;
    return 1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b;
}

double student_t_two_sided_p(double t, double df) {
    if (!(df >= 1.0)) throw ArgumentError("student_t_two_sided_p: df must be >= 1");
    if (std::isnan(t)) throw ArgumentError("student_t_two_sided_p: t is NaN");
    if (std::isinf(t)) return 0.0;
    const double x = df / (df + t * t);
    return std::clamp(regularized_incomplete_beta(x, 0.5 * df, 0.5), 0.0, 1.0);
}

TTestResult paired_t_5x2(const std::array<std::array<double, 2>, 5>& differences) {
    double variance_sum = 0.0;
    for (const auto& rep : differences) {
        const double mean = 0.5 * (rep[0] + rep[1]);
        variance_sum += (rep[0] - mean) * (rep[0] - mean) + (rep[1] - mean) * (rep[1] - mean);
    }
    const double numerator = differences[0][0];
    if (variance_sum == 0.0) {
        if (numerator == 0.0) return {0.0, 1.0};
        throw DegenerateVarianceError("5x2 t-test: every replication has zero variance but the first difference is " +
                                      std::to_string(numerator));
    }
    const double t = numerator / std::sqrt(variance_sum / 5.0);
    return {t, student_t_two_sided_p(t, 5.0)};
}

TTestResult paired_t_5x2(const std::vector<double>& differences) {
    if (differences.size() != 10)
        throw ArgumentError("5x2 t-test needs exactly 10 differences, got " + std::to_string(differences.size()));
    std::array<std::array<double, 2>, 5> grid{};
    for (std::size_t i = 0; i < 5; ++i) grid[i] = {differences[2 * i], differences[2 * i + 1]};
    return paired_t_5x2(grid);
}

std::string to_string(F1Average avg) { return avg == F1Average::Macro ? "macro_f1" : "weighted_f1"; }

F1Average f1_average_from_string(const std::string& name) {
    if (name == "macro" || name == "macro_f1") return F1Average::Macro;
    if (name == "weighted" || name == "weighted_f1") return F1Average::Weighted;
    throw ArgumentError("unknown F1 average '" + name + "' (expected macro or weighted)");
}

std::string CvComparison::to_json() const {
    using nlohmann::json;
    json fold_list = json::array();
    for (const auto& f : folds)
        fold_list.push_back(
            {{"rep", f.rep}, {"fold", f.fold}, {"score_A", f.score_a}, {"score_B", f.score_b}, {"diff", f.diff}});
    json doc = {{"task", task},
                {"metric", metric},
                {"folds", fold_list},
                {"t", t},
                {"p_value", p_value},
                {"alpha", alpha},
                {"significant", significant},
                {"summary", {{"mean_A", mean_a}, {"std_A", std_a}, {"mean_B", mean_b}, {"std_B", std_b}}},
                {"provenance", provenance}};
    return doc.dump(2) + "\n";
}

std::string CvComparison::verdict() const {
    std::ostringstream out;
    out << task << ": t=" << t << ", p=" << p_value << " -> "
        << (significant ? "significant" : "not significant") << " at alpha=" << alpha;
    return out.str();
}

Trainer mtl_trainer() {
    return [](const EmbeddingDataset& train, const EmbeddingDataset& eval, const std::string& task,
              const TrainConfig& config) {
        const auto result = train_mtl(train, nullptr, config);
        const auto t = config.arch.task_index(task);
        return argmax_rows(forward(result.network, eval.x).logits[t]);
    };
}

Trainer stl_trainer() {
    return [](const EmbeddingDataset& train, const EmbeddingDataset& eval, const std::string& task,
              const TrainConfig& config) {
        const auto result = train_stl(train, nullptr, task, config);
        return argmax_rows(forward(result.network, eval.x).logits[0]);
    };
}

namespace {

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sample_std(const std::vector<double>& v) {
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

CvComparison run_5x2(const EmbeddingDataset& ds, const Trainer& trainer_a, const Trainer& trainer_b,
                     const std::string& metric_task, const TrainConfig& config, std::uint64_t base_seed,
                     const FiveByTwoOptions& options) {
    const std::size_t task = ds.task_index(metric_task);
    const std::size_t classes = ds.schemas[task].num_classes();
    config.arch.task_index(metric_task);

    CvComparison out;
    out.task = metric_task;
    out.metric = to_string(options.average);
    out.alpha = options.alpha;

    std::vector<Split> halves;
    for (int rep = 1; rep <= 5; ++rep) {
        Rng split_rng(base_seed + static_cast<std::uint64_t>(rep));
        halves.push_back(stratified_split(ds, 0.5, split_rng));
        const auto singletons = count_singleton_tuples(ds);
        if (singletons > 0)
            out.provenance.push_back("rep " + std::to_string(rep) + ": " + std::to_string(singletons) +
                                     " singleton label tuple(s) placed in half 1");
        if (halves.back().test.size() == 0) throw ArgumentError("5x2: dataset too small to split in halves");
    }

    out.folds.resize(10);
    auto run_fold = [&](std::size_t job) {
        const std::size_t rep = job / 2;
        const std::size_t fold = job % 2;
        const auto& train = fold == 0 ? halves[rep].train : halves[rep].test;
        const auto& eval = fold == 0 ? halves[rep].test : halves[rep].train;
        TrainConfig fold_config = config;
        fold_config.seed = mix64(base_seed ^ mix64(1000 + job));
        const auto& truth = eval.labels[task];
        auto score = [&](const Trainer& trainer) {
            const auto pred = trainer(train, eval, metric_task, fold_config);
            return options.average == F1Average::Macro ? macro_f1(truth, pred, classes)
                                                       : weighted_f1(truth, pred, classes);
        };
        FoldRecord rec;
        rec.rep = static_cast<int>(rep + 1);
        rec.fold = static_cast<int>(fold + 1);
        rec.score_a = score(trainer_a);
        rec.score_b = score(trainer_b);
        rec.diff = rec.score_a - rec.score_b;
        out.folds[job] = rec;
    };

    const std::size_t workers = std::min<std::size_t>(options.threads == 0 ? 5 : options.threads, 10);
    if (workers <= 1) {
        for (std::size_t job = 0; job < 10; ++job) run_fold(job);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t job; (job = next.fetch_add(1)) < 10;) {
                    try {
                        run_fold(job);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    std::vector<double> diffs, a, b;
    for (const auto& f : out.folds) {
        diffs.push_back(f.diff);
        a.push_back(f.score_a);
        b.push_back(f.score_b);
    }
    const auto test = paired_t_5x2(diffs);
    out.t = test.t;
    out.p_value = test.p_value;
    out.significant = out.p_value < out.alpha;
    out.mean_a = mean_of(a);
    out.std_a = sample_std(a);
    out.mean_b = mean_of(b);
    out.std_b = sample_std(b);
    return out;
}

}  // namespace memebg
