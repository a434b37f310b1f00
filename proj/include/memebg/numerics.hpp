#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace memebg {

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    // "rows x cols", used in error messages.
    std::string shape_string() const;

    bool all_finite() const noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without materialising the transpose.
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
// a * b^T without materialising the transpose.
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Adds a 1 x cols row vector to every row of m in place.
void add_row_broadcast(Matrix& m, const Matrix& row_vec);
// 1 x cols sum over rows.
Matrix column_sums(const Matrix& m);
// Selects rows by index, in the given order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

// xoshiro256** seeded through splitmix64. Only integer arithmetic on fixed-width
// types, so a seed yields the same stream on every platform and compiler.
// Normal deviates use the Box-Muller transform and consume two uniforms each
// (the second output of the pair is cached and returned on the next call).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept;
    // Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    // Uniform on (0, 1].
    double uniform_open_zero() noexcept;
    // Unbiased integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound) noexcept;
    double normal() noexcept;

    // Fisher-Yates with below(); std::shuffle is implementation defined.
    template <typename T>
    void shuffle(std::vector<T>& v) noexcept {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent generator for a named sub-stream of a seed.
    static Rng derive(std::uint64_t seed, std::uint64_t stream);

private:
    std::uint64_t seed_;
    std::uint64_t s_[4];
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64 finaliser; also used to mix seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

Matrix gauss_sample(Rng& rng, std::size_t rows, std::size_t cols, double mean, double stddev);

}  // namespace memebg
