#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "core_math.hpp"
#include "errors.hpp"

namespace nngc {

/// T x p observations; row t is x_t.
struct TimeSeriesMatrix {
    Matrix values;

    TimeSeriesMatrix() = default;
    explicit TimeSeriesMatrix(Matrix m) : values(std::move(m)) {
        if (values.rows() == 0 || values.cols() == 0) {
            throw DataError("time series must have T >= 1 and p >= 1");
        }
        for (double v : values.data()) {
            if (!std::isfinite(v)) throw DataError("time series contains a non-finite value");
        }
    }

    [[nodiscard]] std::size_t length() const noexcept { return values.rows(); }
    [[nodiscard]] std::size_t series() const noexcept { return values.cols(); }
};

/// Binary or weighted p x p graph; entry (i, j) is the strength of j -> i.
struct GrangerGraph {
    Matrix weights;

    [[nodiscard]] std::size_t size() const noexcept { return weights.rows(); }
    [[nodiscard]] double operator()(std::size_t i, std::size_t j) const { return weights(i, j); }

    friend bool operator==(const GrangerGraph&, const GrangerGraph&) = default;
};

struct VarProcess {
    std::vector<Matrix> coeffs; // A^(1) .. A^(K), each p x p
    double noise_sigma = 0.1;
    GrangerGraph truth;

    [[nodiscard]] std::size_t lags() const noexcept { return coeffs.size(); }
    [[nodiscard]] std::size_t series() const noexcept {
        return coeffs.empty() ? 0 : coeffs.front().rows();
    }
};

struct VarGenConfig {
    std::size_t p = 10;
    std::size_t lags = 3;
    double edge_prob = 0.2;
    double magnitude = 0.1;
    double target_radius = 0.95;
    double noise_sigma = 0.1;
    std::size_t burn_in = 200;

    friend bool operator==(const VarGenConfig&, const VarGenConfig&) = default;
};

struct LorenzConfig {
    std::size_t p = 10;
    double forcing = 5.0;
    double dt = 0.01;
    double noise_sigma = 0.01;
    double init_sigma = 0.01;
    std::size_t burn_in = 1000;

    friend bool operator==(const LorenzConfig&, const LorenzConfig&) = default;
};

/// pK x pK block companion matrix [A1 A2 .. AK; I 0 ..; ..].
[[nodiscard]] inline Matrix companion_matrix(const std::vector<Matrix>& coeffs) {
    const std::size_t lags = coeffs.size();
    if (lags == 0) throw std::invalid_argument("companion_matrix: no lag matrices");
    const std::size_t p = coeffs.front().rows();
    Matrix c(p * lags, p * lags);
    for (std::size_t k = 0; k < lags; ++k)
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) c(i, k * p + j) = coeffs[k](i, j);
    for (std::size_t r = p; r < p * lags; ++r) c(r, r - p) = 1.0;
    return c;
}

[[nodiscard]] inline GrangerGraph var_truth(const std::vector<Matrix>& coeffs) {
    const std::size_t p = coeffs.front().rows();
    GrangerGraph g{Matrix(p, p)};
    for (const auto& a : coeffs)
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j)
                if (a(i, j) != 0.0) g.weights(i, j) = 1.0;
    return g;
}

/// Random sparse stationary VAR(K).
///
/// Diagonal entries are always active. Each off-diagonal (i, j) is active with
/// probability edge_prob. An active entry draws a lag order L uniformly from
/// 1..K and a sign, and holds the value sign*magnitude at lags 1..L. All
/// coefficients are then multiplied by one scalar, found by bisection, that
/// puts the companion spectral radius at target_radius.
[[nodiscard]] inline VarProcess make_sparse_var(SeededRng& rng, const VarGenConfig& cfg) {
    if (cfg.p == 0) throw ConfigError("var: p must be >= 1");
    if (cfg.lags == 0) throw ConfigError("var: lag order must be >= 1");
    if (!(cfg.edge_prob >= 0.0 && cfg.edge_prob <= 1.0))
        throw ConfigError("var: edge_prob must lie in [0, 1]");
    if (!(cfg.magnitude > 0.0)) throw ConfigError("var: magnitude must be > 0");
    if (!(cfg.target_radius > 0.0 && cfg.target_radius < 1.0))
        throw ConfigError("var: target_radius must lie in (0, 1)");
    if (!(cfg.noise_sigma >= 0.0)) throw ConfigError("var: noise_sigma must be >= 0");

    const std::size_t p = cfg.p;
    std::vector<Matrix> coeffs(cfg.lags, Matrix(p, p));
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            const bool active = (i == j) || rng.bernoulli(cfg.edge_prob);
            if (!active) continue;
            const std::size_t order = 1 + rng.below(cfg.lags);
            const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
            for (std::size_t k = 0; k < order; ++k) coeffs[k](i, j) = sign * cfg.magnitude;
        }
    }

    auto radius_at = [&](double scale) {
        std::vector<Matrix> scaled = coeffs;
        for (auto& a : scaled)
            for (double& v : a.data()) v *= scale;
        return spectral_radius(companion_matrix(scaled));
    };

    if (radius_at(1.0) == 0.0) {
        throw std::runtime_error("make_sparse_var: companion matrix is nilpotent, cannot rescale");
    }
    // The radius is 0 at scale 0 and continuous in the scale.
    double lo = 0.0;
    double hi = 1.0;
    while (radius_at(hi) < cfg.target_radius) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e12) throw std::runtime_error("make_sparse_var: rescaling failed");
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (radius_at(mid) < cfg.target_radius ? lo : hi) = mid;
    }
    const double scale = std::abs(radius_at(lo) - cfg.target_radius) <
                                 std::abs(radius_at(hi) - cfg.target_radius)
                             ? lo
                             : hi;
    for (auto& a : coeffs)
        for (double& v : a.data()) v *= scale;

    VarProcess proc;
    proc.truth = var_truth(coeffs);
    proc.coeffs = std::move(coeffs);
    proc.noise_sigma = cfg.noise_sigma;
    return proc;
}

/// Iterates x_t = sum_k A^(k) x_{t-k} + e_t from a zero history (or
/// `initial` as x_0 when given), drops `burn_in` leading rows, returns T rows.
[[nodiscard]] inline TimeSeriesMatrix simulate_var(const VarProcess& proc, std::size_t T,
                                                   SeededRng& rng, std::size_t burn_in,
                                                   std::optional<Vector> initial = std::nullopt) {
    if (T == 0) throw std::invalid_argument("simulate_var: T must be >= 1");
    const std::size_t p = proc.series();
    const std::size_t lags = proc.lags();
    const std::size_t total = burn_in + T;

    // history row h holds x_{h - lags}; rows [0, lags) are the zero prefix.
    Matrix history(total + lags, p);
    std::size_t start = 0;
    if (initial) {
        if (initial->size() != p) throw std::invalid_argument("simulate_var: bad initial state");
        std::copy(initial->begin(), initial->end(), history.row(lags).begin());
        start = 1;
    }
    for (std::size_t t = start; t < total; ++t) {
        auto x = history.row(lags + t);
        for (std::size_t k = 0; k < lags; ++k) {
            const Vector contrib = matvec(proc.coeffs[k], history.row(lags + t - 1 - k));
            for (std::size_t i = 0; i < p; ++i) x[i] += contrib[i];
        }
        if (proc.noise_sigma > 0.0) {
            for (std::size_t i = 0; i < p; ++i) x[i] += proc.noise_sigma * rng.normal();
        }
        for (double v : x) {
            if (!std::isfinite(v) || std::abs(v) > 1e100) {
                throw DataError("simulate_var: process diverged at step " + std::to_string(t));
            }
        }
    }
    Matrix out(T, p);
    for (std::size_t t = 0; t < T; ++t) {
        const auto src = history.row(lags + burn_in + t);
        std::copy(src.begin(), src.end(), out.row(t).begin());
    }
    return TimeSeriesMatrix(std::move(out));
}

/// Lorenz-96 vector field on a ring of p >= 4 sites.
[[nodiscard]] inline Vector lorenz_derivative(std::span<const double> x, double forcing) {
    const std::size_t p = x.size();
    if (p < 4) throw std::invalid_argument("lorenz_derivative: need p >= 4");
    Vector d(p);
    for (std::size_t i = 0; i < p; ++i) {
        const double next = x[(i + 1) % p];
        const double prev = x[(i + p - 1) % p];
        const double prev2 = x[(i + p - 2) % p];
        d[i] = (next - prev2) * prev - x[i] + forcing;
    }
    return d;
}

/// Truth graph: i depends on i-2, i-1, i, i+1 (mod p).
[[nodiscard]] inline GrangerGraph lorenz_truth(std::size_t p) {
    GrangerGraph g{Matrix(p, p)};
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t offset : {p - 2, p - 1, std::size_t{0}, std::size_t{1}}) {
            g.weights(i, (i + offset) % p) = 1.0;
        }
    }
    return g;
}

struct LorenzSimulation {
    TimeSeriesMatrix series;
    GrangerGraph truth;
};

/// Forward-Euler Lorenz-96 with additive Gaussian noise per step.
///
/// Starts from F + Normal(0, init_sigma^2) per site unless `initial` is given.
[[nodiscard]] inline LorenzSimulation simulate_lorenz(const LorenzConfig& cfg, std::size_t T,
                                                      SeededRng& rng,
                                                      std::optional<Vector> initial = std::nullopt) {
    if (cfg.p < 4) throw ConfigError("lorenz: p must be >= 4");
    if (!(cfg.dt > 0.0)) throw ConfigError("lorenz: dt must be > 0");
    if (!(cfg.noise_sigma >= 0.0)) throw ConfigError("lorenz: noise_sigma must be >= 0");
    if (!(cfg.init_sigma >= 0.0)) throw ConfigError("lorenz: init_sigma must be >= 0");
    if (T == 0) throw std::invalid_argument("simulate_lorenz: T must be >= 1");

    const std::size_t p = cfg.p;
    Vector x;
    if (initial) {
        if (initial->size() != p) throw std::invalid_argument("simulate_lorenz: bad initial state");
        x = *initial;
    } else {
        x.assign(p, cfg.forcing);
        for (double& v : x) v += cfg.init_sigma * rng.normal();
    }

    Matrix out(T, p);
    const std::size_t total = cfg.burn_in + T;
    for (std::size_t t = 0; t < total; ++t) {
        if (t >= cfg.burn_in) std::copy(x.begin(), x.end(), out.row(t - cfg.burn_in).begin());
        if (t + 1 == total) break;
        const Vector d = lorenz_derivative(x, cfg.forcing);
        for (std::size_t i = 0; i < p; ++i) {
            x[i] += cfg.dt * d[i];
            if (cfg.noise_sigma > 0.0) x[i] += cfg.noise_sigma * rng.normal();
            if (!std::isfinite(x[i]) || std::abs(x[i]) > 1e8) {
                throw DataError("simulate_lorenz: trajectory diverged at step " + std::to_string(t));
            }
        }
    }
    return {TimeSeriesMatrix(std::move(out)), lorenz_truth(p)};
}

struct Standardization {
    Vector mean;
    Vector stddev;
};

/// Column-wise z-scoring with the population standard deviation.
[[nodiscard]] inline std::pair<TimeSeriesMatrix, Standardization> standardize(
    const TimeSeriesMatrix& ts) {
    const std::size_t T = ts.length();
    const std::size_t p = ts.series();
    Standardization tr{Vector(p, 0.0), Vector(p, 0.0)};
    for (std::size_t j = 0; j < p; ++j) {
        double mean = 0.0;
        for (std::size_t t = 0; t < T; ++t) mean += ts.values(t, j);
        mean /= static_cast<double>(T);
        double var = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            const double d = ts.values(t, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(T);
        if (!(var > 0.0)) {
            throw DataError("standardize: series " + std::to_string(j) + " has zero variance");
        }
        tr.mean[j] = mean;
        tr.stddev[j] = std::sqrt(var);
    }
    Matrix out(T, p);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < p; ++j)
            out(t, j) = (ts.values(t, j) - tr.mean[j]) / tr.stddev[j];
    return {TimeSeriesMatrix(std::move(out)), std::move(tr)};
}

enum class GeneratorKind { var, lorenz };

[[nodiscard]] inline std::string_view to_string(GeneratorKind k) noexcept {
    return k == GeneratorKind::var ? "var" : "lorenz";
}

[[nodiscard]] inline GeneratorKind parse_generator_kind(std::string_view name) {
    if (name == "var") return GeneratorKind::var;
    if (name == "lorenz") return GeneratorKind::lorenz;
    throw ConfigError("unknown generator '" + std::string(name) + "' (expected var or lorenz)");
}

struct GeneratorConfig {
    GeneratorKind kind = GeneratorKind::var;
    std::size_t length = 1000; // T
    VarGenConfig var;
    LorenzConfig lorenz;

    [[nodiscard]] std::size_t series() const noexcept {
        return kind == GeneratorKind::var ? var.p : lorenz.p;
    }

    friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

struct GeneratedData {
    TimeSeriesMatrix series;
    GrangerGraph truth;
};

/// Dataset and truth graph as a pure function of (config, seed).
[[nodiscard]] inline GeneratedData generate(const GeneratorConfig& cfg, std::uint64_t seed) {
    if (cfg.length == 0) throw ConfigError("generator: T must be >= 1");
    const SeededRng root(seed);
    if (cfg.kind == GeneratorKind::var) {
        SeededRng structure = root.child(0);
        SeededRng noise = root.child(1);
        const VarProcess proc = make_sparse_var(structure, cfg.var);
        return {simulate_var(proc, cfg.length, noise, cfg.var.burn_in), proc.truth};
    }
    SeededRng noise = root.child(1);
    auto sim = simulate_lorenz(cfg.lorenz, cfg.length, noise);
    return {std::move(sim.series), std::move(sim.truth)};
}

} // namespace nngc
