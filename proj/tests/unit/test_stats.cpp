#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "memebg/errors.hpp"
#include "memebg/stats.hpp"
#include "oracles/oracles.hpp"

using namespace memebg;

TEST_CASE("5x2 statistic on the worked difference set") {
    // fold 1: .02 .03 .01 .02 .02, fold 2: .01 .02 .03 .02 .01
    const std::vector<double> d{0.02, 0.01, 0.03, 0.02, 0.01, 0.03, 0.02, 0.02, 0.02, 0.01};
    const auto r = paired_t_5x2(d);
    // s_i^2 = 5e-5, 5e-5, 2e-4, 0, 5e-5 -> sum 3.5e-4; t = 0.02 / sqrt(7e-5)
    CHECK(std::abs(r.t - 0.02 / std::sqrt(7e-5)) < 1e-12);
    CHECK(std::abs(r.t - 2.390) < 1e-3);
    CHECK(std::abs(r.t - oracle::naive_t_5x2(d)) < 1e-12);
    CHECK(std::abs(r.p_value - oracle::t_two_sided_p_by_quadrature(r.t, 5.0)) < 1e-8);
}

TEST_CASE("5x2 degenerate cases and argument errors") {
    const std::vector<double> zeros(10, 0.0);
    const auto r = paired_t_5x2(zeros);
    CHECK(r.t == 0.0);
    CHECK(r.p_value == 1.0);
    CHECK_THROWS_AS(paired_t_5x2(std::vector<double>(10, 0.03)), DegenerateVarianceError);
    CHECK_THROWS_AS(paired_t_5x2(std::vector<double>(9, 0.01)), ArgumentError);
}

TEST_CASE("5x2 statistic symmetry and oracle agreement") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> d(10);
        for (auto& v : d) v = 0.05 * rng.normal();
        const auto r = paired_t_5x2(d);
        CHECK(std::abs(r.t - oracle::naive_t_5x2(d)) <= 1e-12 * std::max(1.0, std::abs(r.t)));

        std::vector<double> neg = d;
        for (auto& v : neg) v = -v;
        const auto rn = paired_t_5x2(neg);
        CHECK(rn.t == -r.t);
        CHECK(rn.p_value == doctest::Approx(r.p_value).epsilon(1e-14));

        // Adding a constant to every score of both methods leaves differences unchanged.
        std::vector<double> a(10), b(10), shifted(10);
        for (std::size_t i = 0; i < 10; ++i) {
            b[i] = 0.5 + 0.1 * rng.normal();
            a[i] = b[i] + d[i];
            shifted[i] = (a[i] + 0.2) - (b[i] + 0.2);
        }
        CHECK(std::abs(paired_t_5x2(shifted).t - r.t) < 1e-9 * std::max(1.0, std::abs(r.t)));
    }
}

TEST_CASE("student t tail probability") {
    CHECK(student_t_two_sided_p(0.0, 5.0) == 1.0);
    CHECK(std::abs(student_t_two_sided_p(2.5706, 5.0) - 0.05) < 5e-4);
    CHECK(std::abs(oracle::t_two_sided_p_by_quadrature(2.5706, 5.0) - 0.05) < 5e-4);
    for (double df : {1.0, 2.0, 5.0, 10.0, 30.0})
        for (double t = 0.0; t <= 8.0; t += 0.37)
            CHECK(std::abs(student_t_two_sided_p(t, df) - oracle::t_two_sided_p_by_quadrature(t, df)) < 1e-8);
    // df = 1 is Cauchy: p = 1 - 2 atan(t) / pi
    CHECK(std::abs(student_t_two_sided_p(1.0, 1.0) - 0.5) < 1e-12);
    double previous = 1.0;
    for (double t = 0.1; t < 10.0; t += 0.1) {
        const double p = student_t_two_sided_p(t, 5.0);
        CHECK(p < previous);
        CHECK(student_t_two_sided_p(-t, 5.0) == p);
        previous = p;
    }
    CHECK_THROWS_AS(student_t_two_sided_p(1.0, 0.5), ArgumentError);
}

namespace {

EmbeddingDataset small_synthetic(std::uint64_t seed, std::size_t n = 60) {
    SyntheticSpec spec;
    spec.n = n;
    spec.d = 8;
    spec.k = 4;
    spec.noise_sigma = 0.5;
    spec.coupling = 0.8;
    Rng rng(seed);
    return generate_synthetic(spec, rng);
}

TrainConfig tiny_config(const EmbeddingDataset& ds) {
    TrainConfig c;
    c.arch = arch_for(ds, {8});
    c.epochs = 5;
    c.batch_size = 16;
    return c;
}

}  // namespace

TEST_CASE("run_5x2 with identical trainers gives t = 0 and p = 1") {
    const auto ds = small_synthetic(1);
    const auto cmp = run_5x2(ds, mtl_trainer(), mtl_trainer(), "TE", tiny_config(ds), 7);
    REQUIRE(cmp.folds.size() == 10);
    for (const auto& f : cmp.folds) CHECK(f.diff == 0.0);
    CHECK(cmp.t == 0.0);
    CHECK(cmp.p_value == 1.0);
    CHECK_FALSE(cmp.significant);
    const auto doc = nlohmann::json::parse(cmp.to_json());
    CHECK(doc.at("folds").size() == 10);
    CHECK(doc.at("metric") == "macro_f1");
}

TEST_CASE("run_5x2 is deterministic and thread-count independent") {
    const auto ds = small_synthetic(2);
    FiveByTwoOptions serial;
    FiveByTwoOptions parallel;
    parallel.threads = 4;
    const auto a = run_5x2(ds, mtl_trainer(), stl_trainer(), "EXP", tiny_config(ds), 11, serial);
    const auto b = run_5x2(ds, mtl_trainer(), stl_trainer(), "EXP", tiny_config(ds), 11, parallel);
    REQUIRE(a.folds.size() == b.folds.size());
    for (std::size_t i = 0; i < a.folds.size(); ++i) {
        CHECK(a.folds[i].rep == b.folds[i].rep);
        CHECK(a.folds[i].fold == b.folds[i].fold);
        CHECK(a.folds[i].score_a == b.folds[i].score_a);
        CHECK(a.folds[i].score_b == b.folds[i].score_b);
    }
    CHECK(a.t == b.t);
    CHECK(a.folds[0].rep == 1);
    CHECK(a.folds[1].fold == 2);
    CHECK(a.folds[9].rep == 5);
}

TEST_CASE("run_5x2 rejects unknown tasks") {
    const auto ds = small_synthetic(3);
    CHECK_THROWS(run_5x2(ds, mtl_trainer(), stl_trainer(), "ZP", tiny_config(ds), 1));
}

TEST_CASE("null rejection rate stays in the calibration band") {
    // Same trainer on both sides with independent seeds, 200 comparisons.
    const Trainer reseeded = [](const EmbeddingDataset& train, const EmbeddingDataset& eval, const std::string& task,
                                const TrainConfig& config) {
        TrainConfig other = config;
        other.seed = mix64(config.seed ^ 0xA5A5A5A5ULL);
        return mtl_trainer()(train, eval, task, other);
    };
    int rejections = 0;
    int comparisons = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
        const auto ds = small_synthetic(1000 + s, 40);
        auto cfg = tiny_config(ds);
        cfg.epochs = 3;
        try {
            const auto cmp = run_5x2(ds, mtl_trainer(), reseeded, "TE", cfg, s);
            rejections += cmp.p_value < 0.05;
        } catch (const DegenerateVarianceError&) {
            // Every fold difference equal and nonzero: the test is undefined, counted as no rejection.
        }
        ++comparisons;
    }
    const double rate = static_cast<double>(rejections) / comparisons;
    MESSAGE("null rejection rate " << rate);
    CHECK(rate >= 0.0);
    CHECK(rate <= 0.15);
}

TEST_CASE("MTL beats STL on most 5x2 folds in the data-limited coupled regime") {
    SyntheticSpec spec;
    spec.n = 100;
    spec.d = 64;
    spec.k = 8;
    spec.coupling = 0.9;
    spec.noise_sigma = 0.3;
    Rng rng(1);
    const auto ds = generate_synthetic(spec, rng);
    TrainConfig cfg;
    cfg.arch = arch_for(ds);
    std::vector<double> fold_mean(10, 0.0);
    for (const char* task : {"TE", "ICM", "EXP"}) {
        const auto cmp = run_5x2(ds, mtl_trainer(), stl_trainer(), task, cfg, 42);
        for (std::size_t i = 0; i < 10; ++i) fold_mean[i] += cmp.folds[i].diff / 3.0;
    }
    const auto favoring = std::count_if(fold_mean.begin(), fold_mean.end(), [](double d) { return d > 0.0; });
    MESSAGE("folds favoring MTL (task-averaged difference): " << favoring);
    CHECK(favoring >= 7);
}
