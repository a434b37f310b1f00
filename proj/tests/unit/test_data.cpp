#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "memebg/data.hpp"
#include "memebg/errors.hpp"
#include "test_support.hpp"

using namespace memebg;
using memebg::testing::temp_dir;
using memebg::testing::write_file;

namespace {

EmbeddingDataset one_task_dataset(const std::vector<int>& labels) {
    EmbeddingDataset ds;
    ds.schemas = {{"TE", {"A", "B"}}};
    ds.x = Matrix(labels.size(), 2);
    for (std::size_t j = 0; j < labels.size(); ++j) {
        ds.ids.push_back("s" + std::to_string(j));
        ds.x(j, 0) = static_cast<double>(j);
    }
    ds.labels = {labels};
    return ds;
}

EmbeddingDataset random_dataset(Rng& rng, std::size_t n) {
    EmbeddingDataset ds;
    ds.schemas = default_schemas();
    ds.x = gauss_sample(rng, n, 3, 0.0, 1.0);
    ds.labels.assign(3, std::vector<int>(n));
    for (std::size_t j = 0; j < n; ++j) {
        ds.ids.push_back("r" + std::to_string(j));
        for (std::size_t t = 0; t < 3; ++t)
            ds.labels[t][j] = static_cast<int>(rng.below(ds.schemas[t].num_classes()));
    }
    return ds;
}

// Perceptron with bias; returns training accuracy after convergence or the epoch cap.
double perceptron_accuracy(const Matrix& x, const std::vector<int>& y, std::size_t max_epochs) {
    std::vector<double> w(x.cols() + 1, 0.0);
    auto score = [&](std::size_t j) {
        double s = w.back();
        for (std::size_t c = 0; c < x.cols(); ++c) s += w[c] * x(j, c);
        return s;
    };
    for (std::size_t epoch = 0; epoch < max_epochs; ++epoch) {
        std::size_t mistakes = 0;
        for (std::size_t j = 0; j < x.rows(); ++j) {
            const double sign = y[j] == 1 ? 1.0 : -1.0;
            if (sign * score(j) <= 0.0) {
                ++mistakes;
                for (std::size_t c = 0; c < x.cols(); ++c) w[c] += sign * x(j, c);
                w.back() += sign;
            }
        }
        if (mistakes == 0) break;
    }
    std::size_t hits = 0;
    for (std::size_t j = 0; j < x.rows(); ++j) hits += (score(j) > 0.0) == (y[j] == 1);
    return static_cast<double>(hits) / static_cast<double>(x.rows());
}

}  // namespace

TEST_CASE("load_dataset joins embeddings and labels") {
    const auto dir = temp_dir("data_load");
    write_file(dir / "emb.csv", "id,e0,e1\na,0.5,1\nb,-2,3.25\nc,0,1e-3\n");
    write_file(dir / "lab.csv", "id,te,icm,exp\nc,B,A,2\na,A,B,0\nb,A,A,1\n");
    const auto ds = load_dataset(dir / "emb.csv", dir / "lab.csv");
    CHECK(ds.size() == 3);
    CHECK(ds.dim() == 2);
    CHECK(ds.ids == std::vector<std::string>{"a", "b", "c"});
    CHECK(ds.x(1, 1) == 3.25);
    CHECK(ds.labels[0] == std::vector<int>{0, 0, 1});
    CHECK(ds.labels[1] == std::vector<int>{1, 0, 0});
    CHECK(ds.labels[2] == std::vector<int>{0, 1, 2});
}

TEST_CASE("load_dataset rejects unknown labels") {
    const auto dir = temp_dir("data_schema");
    write_file(dir / "emb.csv", "id,e0\na,1\n");
    write_file(dir / "lab.csv", "id,te,icm,exp\na,C,A,0\n");
    CHECK_THROWS_AS(load_dataset(dir / "emb.csv", dir / "lab.csv"), SchemaError);
}

TEST_CASE("load_dataset join error names the unmatched id") {
    const auto dir = temp_dir("data_join");
    write_file(dir / "emb.csv", "id,e0\na,1\nb,2\nc,3\nzz,4\n");
    write_file(dir / "lab.csv", "id,te,icm,exp\na,A,A,0\nb,A,A,0\nc,A,A,0\n");
    try {
        (void)load_dataset(dir / "emb.csv", dir / "lab.csv");
        FAIL("expected JoinError");
    } catch (const JoinError& e) {
        CHECK(std::string(e.what()).find("zz") != std::string::npos);
    }
}

TEST_CASE("load_dataset parse error carries row and column") {
    const auto dir = temp_dir("data_parse");
    write_file(dir / "emb.csv", "id,e0,e1\na,1,2\nb,3,x4\n");
    write_file(dir / "lab.csv", "id,te,icm,exp\na,A,A,0\nb,A,A,0\n");
    try {
        (void)load_dataset(dir / "emb.csv", dir / "lab.csv");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 3") != std::string::npos);
        CHECK(msg.find("column 2") != std::string::npos);
    }
}

TEST_CASE("save then load round-trips ids, labels and float32 embeddings") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        const auto ds = random_dataset(rng, 25);
        const auto dir = temp_dir("data_roundtrip");
        save_dataset(ds, dir / "e.csv", dir / "l.csv");
        const auto back = load_dataset(dir / "e.csv", dir / "l.csv");
        CHECK(back.ids == ds.ids);
        CHECK(back.labels == ds.labels);
        for (std::size_t i = 0; i < ds.x.size(); ++i)
            CHECK(back.x.data()[i] == static_cast<double>(static_cast<float>(ds.x.data()[i])));
    }
}

TEST_CASE("stratified_split single tuple 10 samples at 0.75") {
    Rng rng(1);
    const auto split = stratified_split(one_task_dataset(std::vector<int>(10, 0)), 0.75, rng);
    CHECK(split.train.size() == 7);
    CHECK(split.test.size() == 3);
}

TEST_CASE("stratified_split largest remainder across tuples") {
    // T1 (label 0) has 6 samples, T2 (label 1) has 4. Floors are 4 and 3.
    Rng rng(2);
    const auto split = stratified_split(one_task_dataset({0, 0, 0, 0, 0, 0, 1, 1, 1, 1}), 0.75, rng);
    const auto& y = split.train.labels[0];
    CHECK(std::count(y.begin(), y.end(), 0) == 4);
    CHECK(std::count(y.begin(), y.end(), 1) == 3);

    // 5 and 5 at 0.5: floors 2 + 2 = 4, one extra seat goes to the first tuple on the tie.
    Rng rng2(2);
    const auto tie = stratified_split(one_task_dataset({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}), 0.5, rng2);
    const auto& yt = tie.train.labels[0];
    CHECK(std::count(yt.begin(), yt.end(), 0) == 3);
    CHECK(std::count(yt.begin(), yt.end(), 1) == 2);
}

TEST_CASE("stratified_split is a partition with the documented size") {
    Rng rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 2 + rng.below(80);
        const auto ds = random_dataset(rng, n);
        const double f = 0.1 + 0.8 * rng.uniform();
        const auto split = stratified_split(ds, f, rng);
        std::set<std::string> train(split.train.ids.begin(), split.train.ids.end());
        std::set<std::string> test(split.test.ids.begin(), split.test.ids.end());
        std::set<std::string> all(ds.ids.begin(), ds.ids.end());
        std::set<std::string> both = train;
        both.insert(test.begin(), test.end());
        CHECK(both == all);
        CHECK(train.size() + test.size() == n);
        const auto target = static_cast<long>(std::floor(f * static_cast<double>(n)));
        const auto singles = static_cast<long>(count_singleton_tuples(ds));
        CHECK(std::labs(static_cast<long>(split.train.size()) - target) <= singles);
    }
}

TEST_CASE("stratified_split argument errors") {
    Rng rng(1);
    const auto ds = one_task_dataset({0, 1, 0});
    CHECK_THROWS_AS(stratified_split(ds, 0.0, rng), ArgumentError);
    CHECK_THROWS_AS(stratified_split(ds, 1.0, rng), ArgumentError);
    CHECK_THROWS_AS(stratified_split(one_task_dataset({0}), 0.5, rng), ArgumentError);
}

TEST_CASE("generate_synthetic is deterministic") {
    SyntheticSpec spec;
    spec.n = 50;
    Rng a(123), b(123);
    const auto da = generate_synthetic(spec, a);
    const auto db = generate_synthetic(spec, b);
    CHECK(da.ids == db.ids);
    CHECK(da.x == db.x);
    CHECK(da.labels == db.labels);
}

TEST_CASE("generate_synthetic class frequency follows priors") {
    SyntheticSpec spec;
    spec.n = 2000;
    spec.class_priors = {{0.5, 0.5}, {0.5, 0.5}, {0.2, 0.5, 0.3}};
    Rng rng(2024);
    const auto ds = generate_synthetic(spec, rng);
    for (std::size_t t = 0; t < 2; ++t) {
        const double freq = static_cast<double>(std::count(ds.labels[t].begin(), ds.labels[t].end(), 0)) / 2000.0;
        CHECK(std::abs(freq - 0.5) < 0.03);
    }
    const double mid = static_cast<double>(std::count(ds.labels[2].begin(), ds.labels[2].end(), 1)) / 2000.0;
    CHECK(std::abs(mid - 0.5) < 0.03);
}

TEST_CASE("generate_synthetic noiseless tasks are linearly separable") {
    SyntheticSpec spec;
    spec.n = 200;
    spec.d = 16;
    spec.k = 4;
    spec.noise_sigma = 0.0;
    spec.coupling = 0.0;
    spec.schemas = {{"TE", {"A", "B"}}, {"ICM", {"A", "B"}}};
    spec.k = 4;
    Rng rng(5);
    const auto ds = generate_synthetic(spec, rng);
    for (std::size_t t = 0; t < 2; ++t) CHECK(perceptron_accuracy(ds.x, ds.labels[t], 200000) == 1.0);
}

TEST_CASE("generate_synthetic full coupling gives identical labels under equal priors") {
    SyntheticSpec spec;
    spec.n = 300;
    spec.coupling = 1.0;
    Rng rng(9);
    const auto ds = generate_synthetic(spec, rng);
    CHECK(ds.labels[0] == ds.labels[1]);
}

TEST_CASE("generate_synthetic validation") {
    SyntheticSpec spec;
    spec.d = 4;
    spec.k = 8;
    Rng rng(1);
    CHECK_THROWS_AS(generate_synthetic(spec, rng), ArgumentError);
    spec = {};
    spec.class_priors = {{0.6, 0.6}, {0.5, 0.5}, {0.2, 0.3, 0.5}};
    CHECK_THROWS_AS(generate_synthetic(spec, rng), ArgumentError);
}

TEST_CASE("inverse_normal_cdf matches known quantiles") {
    CHECK(std::abs(inverse_normal_cdf(0.5)) < 1e-12);
    CHECK(std::abs(inverse_normal_cdf(0.975) - 1.959963984540054) < 1e-9);
    CHECK(std::abs(inverse_normal_cdf(0.01) + 2.326347874040841) < 1e-9);
}
