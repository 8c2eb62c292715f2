#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hhsae {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dense row-major matrix of 64-bit floats. Column vectors are stored as n x 1.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix column(std::vector<double> values);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
    std::vector<double> col(std::size_t c) const;

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;
    void fill(double v);

    bool operator==(const Matrix& o) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T, the common case for row-major batch x weight products.
Matrix matmul_bt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Matrix select_rows(const Matrix& a, std::span<const std::size_t> rows);
Matrix hconcat(const Matrix& a, const Matrix& b);
Matrix vconcat(const Matrix& a, const Matrix& b);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double cosine(std::span<const double> a, std::span<const double> b);
double max_abs_diff(const Matrix& a, const Matrix& b);

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, std::string_view what);

// ---------------------------------------------------------------------------
// Randomness
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. Uniforms use the top 53 bits; normals use Box-Muller with the
// second variate cached. Distribution code is ours, so draws are identical
// across standard libraries.
//
// Each pipeline consumer derives its own stream from the run seed and a
// stream tag through SplitMix64, so adding draws in one stage never shifts
// another stage's sequence.
// ---------------------------------------------------------------------------

namespace stream {
inline constexpr std::string_view kInit = "init";
inline constexpr std::string_view kBatching = "batching";
inline constexpr std::string_view kSynthesis = "synthesis";
inline constexpr std::string_view kSplit = "split";
inline constexpr std::string_view kFolds = "folds";
inline constexpr std::string_view kManifold = "manifold";
inline constexpr std::string_view kCommunity = "community";
inline constexpr std::string_view kAugment = "augment";
}  // namespace stream

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

class Rng {
public:
    explicit Rng(std::uint64_t seed);
    Rng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

    std::uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    double normal();
    std::size_t below(std::size_t n);       // [0, n), rejection-sampled

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

Matrix seeded_gaussian(std::uint64_t seed, std::size_t rows, std::size_t cols);

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
};

struct AdamState {
    Matrix m;
    Matrix v;
    std::uint64_t step = 0;

    static AdamState like(const Matrix& param);
};

// In-place: param <- param - lr*wd*param, then the bias-corrected Adam update.
void adam_step(Matrix& param, const Matrix& grad, AdamState& state, const AdamConfig& cfg);

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

using ScalarFn = std::function<double(const Matrix&)>;

// Central differences (f(x+h e_i) - f(x-h e_i)) / 2h for every entry.
Matrix finite_difference_gradient(const ScalarFn& loss_fn, const Matrix& point, double h);

}  // namespace hhsae
