#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace nngc {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
///
/// Storage order is part of the contract: checkpoint and CSV writers walk
/// `data()` directly.
class Matrix {
public:
    Matrix() = default;

    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Matrix(std::size_t rows, std::size_t cols, Vector data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                        " does not match " + std::to_string(rows_) + "x" +
                                        std::to_string(cols_));
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    [[nodiscard]] std::span<double> row(std::size_t r) noexcept {
        return {data_.data() + r * cols_, cols_};
    }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    [[nodiscard]] std::span<double> data() noexcept { return data_; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

    [[nodiscard]] Vector column(std::size_t c) const {
        Vector out(rows_);
        for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
        return out;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

[[nodiscard]] inline Vector matvec(const Matrix& m, std::span<const double> v) {
    if (v.size() != m.cols()) {
        throw std::invalid_argument("matvec: vector length " + std::to_string(v.size()) +
                                    " != matrix cols " + std::to_string(m.cols()));
    }
    Vector out(m.rows(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto row = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
    return out;
}

[[nodiscard]] inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

[[nodiscard]] inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Spectral radius by Gelfand's formula, rho(M) = lim ||M^n||^(1/n), taking
/// n = 2^64 through repeated squaring with renormalisation. QR eigenvalues
/// lose half their digits on defective eigenvalues, which companion matrices
/// of VARs with repeated per-series dynamics have routinely; this does not.
[[nodiscard]] inline double spectral_radius(const Matrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("spectral_radius: matrix not square");
    if (m.rows() == 0) return 0.0;
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
    if (!e.allFinite()) throw std::invalid_argument("spectral_radius: non-finite entry");
    double log_radius = 0.0;
    double power = 1.0;
    for (int step = 0; step < 64; ++step) {
        const double norm = e.norm();
        if (norm == 0.0) return 0.0; // nilpotent
        e /= norm;
        log_radius += std::log(norm) / power;
        e = (e * e).eval();
        power *= 2.0;
    }
    const double norm = e.norm();
    if (norm == 0.0) return 0.0;
    return std::exp(log_radius + std::log(norm) / power);
}

// SplitMix64 finalizer; used to derive child seeds.
[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seeded generator with a platform-independent draw sequence.
///
/// Built on std::mt19937_64, whose output sequence is fixed by the standard.
/// Uniforms take the top 53 bits; normals use Box-Muller with the second
/// variate cached. None of the std:: distributions are used because their
/// algorithms are implementation-defined.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

    /// Independent generator for stream `stream`: seed = mix(mix(parent) ^ stream).
    [[nodiscard]] SeededRng child(std::uint64_t stream) const {
        return SeededRng(mix_seed(mix_seed(seed_) ^ mix_seed(stream + 0x51ed270b27a3ULL)));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        cached_ = radius * std::sin(angle);
        has_cached_ = true;
        return radius * std::cos(angle);
    }

    bool bernoulli(double prob) { return uniform() < prob; }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n));
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// n independent Normal(0, sigma^2) draws.
[[nodiscard]] inline Vector gauss_sample(SeededRng& rng, std::size_t n, double sigma) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("gauss_sample: sigma must be >= 0");
    if (n == 0) throw std::invalid_argument("gauss_sample: n must be >= 1");
    Vector out(n, 0.0);
    if (sigma == 0.0) return out;
    for (auto& v : out) v = sigma * rng.normal();
    return out;
}

/// Central-difference gradient of `f` at `x`.
template <class F>
[[nodiscard]] Vector finite_diff_grad(F&& f, std::span<const double> x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
    Vector probe(x.begin(), x.end());
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = f(std::span<const double>(probe));
        probe[i] = orig - h;
        const double down = f(std::span<const double>(probe));
        probe[i] = orig;
        out[i] = (up - down) / (2.0 * h);
    }
    return out;
}

} // namespace nngc
