#include "hhsae/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace hhsae {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw Error("matrix data length " + std::to_string(data_.size()) + " does not match " +
                    std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix Matrix::column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Matrix(n, 1, std::move(values));
}

std::vector<double> Matrix::col(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

bool Matrix::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, std::string_view what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw Error(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                    std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()));
    }
}

// Accumulation order is k ascending for every output entry, the same as the
// naive triple loop.
Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw Error("matmul: inner dimension mismatch");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto o = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) o[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix matmul_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw Error("matmul_bt: inner dimension mismatch");
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto arow = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(arow, b.row(j));
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Matrix select_rows(const Matrix& a, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), a.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= a.rows()) throw Error("select_rows: index out of range");
        std::copy_n(a.row(rows[i]).begin(), a.cols(), out.row(i).begin());
    }
    return out;
}

Matrix hconcat(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw Error("hconcat: row count mismatch");
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto o = out.row(i);
        std::copy_n(a.row(i).begin(), a.cols(), o.begin());
        std::copy_n(b.row(i).begin(), b.cols(), o.begin() + static_cast<std::ptrdiff_t>(a.cols()));
    }
    return out;
}

Matrix vconcat(const Matrix& a, const Matrix& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    if (a.cols() != b.cols()) throw Error("vconcat: column count mismatch");
    std::vector<double> data(a.data());
    data.insert(data.end(), b.data().begin(), b.data().end());
    return Matrix(a.rows() + b.rows(), a.cols(), std::move(data));
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double cosine(std::span<const double> a, std::span<const double> b) {
    const double na = norm2(a), nb = norm2(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw Error("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

// --- randomness -------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
    // FNV-1a over the tag, then mixed with seed and index.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(seed ^ h) + index);
}

Rng::Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

Rng::Rng(std::uint64_t seed, std::string_view tag, std::uint64_t index)
    : engine_(derive_seed(seed, tag, index)) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 0.0;
    while (u1 == 0.0) u1 = uniform();
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = rad * std::sin(theta);
    has_spare_ = true;
    return rad * std::cos(theta);
}

std::size_t Rng::below(std::size_t n) {
    if (n == 0) throw Error("Rng::below: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % n);
}

Matrix seeded_gaussian(std::uint64_t seed, std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) throw Error("seeded_gaussian: zero dimension");
    Rng rng(seed);
    Matrix out(rows, cols);
    for (auto& v : out.flat()) v = rng.normal();
    return out;
}

// --- Adam -------------------------------------------------------------------

AdamState AdamState::like(const Matrix& param) {
    return AdamState{Matrix(param.rows(), param.cols()), Matrix(param.rows(), param.cols()), 0};
}

void adam_step(Matrix& param, const Matrix& grad, AdamState& state, const AdamConfig& cfg) {
    if (!param.same_shape(grad)) throw Error("adam_step: gradient shape mismatch");
    if (!param.same_shape(state.m) || !param.same_shape(state.v))
        throw Error("adam_step: optimizer state shape mismatch");
    if (!(cfg.lr >= 0.0)) throw Error("adam_step: learning rate must be non-negative");

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    const double decay = 1.0 - cfg.lr * cfg.weight_decay;

    auto p = param.flat();
    auto g = grad.flat();
    auto m = state.m.flat();
    auto v = state.v.flat();
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (cfg.weight_decay != 0.0) p[i] *= decay;
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

// --- finite differences -----------------------------------------------------

Matrix finite_difference_gradient(const ScalarFn& loss_fn, const Matrix& point, double h) {
    if (!(h > 0.0)) throw Error("finite_difference_gradient: h must be positive");
    Matrix grad(point.rows(), point.cols());
    Matrix probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double x0 = point[i];
        probe[i] = x0 + h;
        const double fp = loss_fn(probe);
        probe[i] = x0 - h;
        const double fm = loss_fn(probe);
        probe[i] = x0;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw Error("finite_difference_gradient: non-finite loss at entry " + std::to_string(i));
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace hhsae
