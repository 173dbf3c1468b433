#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's forward pass, penalty, optimizer or
// spectral-radius code; ComponentMLP is used only as a parameter container.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/eigen.hpp>

#include "nngc/cmlp.hpp"

namespace oracle {

using nngc::Matrix;
using nngc::Vector;

/// Group lasso on a linear autoregression for one target:
/// minimize ||y - X beta - b||^2 + lambda * sum_j ||(beta_{k*p + j})_k||
/// with an unpenalized intercept b. Columns of X are lag-major (lag 1 block
/// first), p series per lag.
struct LinearSolution {
    Vector beta;
    double intercept = 0.0;
    double objective = 0.0;
};

inline double linear_objective(const Matrix& X, const Vector& y, std::size_t p, double lambda,
                               const Vector& beta, double b) {
    double rss = 0.0;
    for (std::size_t n = 0; n < X.rows(); ++n) {
        double r = y[n] - b;
        for (std::size_t c = 0; c < X.cols(); ++c) r -= X(n, c) * beta[c];
        rss += r * r;
    }
    double pen = 0.0;
    const std::size_t K = X.cols() / p;
    for (std::size_t j = 0; j < p; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += beta[k * p + j] * beta[k * p + j];
        pen += std::sqrt(s);
    }
    return rss + lambda * pen;
}

/// FISTA with a fixed 1/L step (L from power iteration on the Gram matrix of
/// [X 1]) and function-value restarts, run far past any practical tolerance.
inline LinearSolution group_lasso_reference(const Matrix& X, const Vector& y, std::size_t p,
                                            double lambda, std::size_t iters = 200000) {
    const std::size_t n_rows = X.rows(), d = X.cols() + 1;
    auto design = [&](std::size_t n, std::size_t c) { return c + 1 == d ? 1.0 : X(n, c); };
    Matrix gram(d, d);
    for (std::size_t n = 0; n < n_rows; ++n)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) gram(a, b) += design(n, a) * design(n, b);
    Vector v(d, 1.0);
    double eig = 0.0;
    for (int it = 0; it < 1000; ++it) {
        Vector w(d, 0.0);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b) w[a] += gram(a, b) * v[b];
        eig = std::sqrt(std::inner_product(w.begin(), w.end(), w.begin(), 0.0));
        for (std::size_t a = 0; a < d; ++a) v[a] = w[a] / eig;
    }
    const double step = 1.0 / (2.0 * eig * 1.01);
    const std::size_t K = X.cols() / p;

    Vector theta(d, 0.0), prev(d, 0.0), z(d, 0.0);
    double t = 1.0;
    auto obj_of = [&](const Vector& th) {
        return linear_objective(X, y, p, lambda, Vector(th.begin(), th.end() - 1), th.back());
    };
    double last_obj = obj_of(theta);
    for (std::size_t it = 0; it < iters; ++it) {
        Vector grad(d, 0.0);
        for (std::size_t n = 0; n < n_rows; ++n) {
            double r = y[n];
            for (std::size_t c = 0; c < d; ++c) r -= design(n, c) * z[c];
            for (std::size_t c = 0; c < d; ++c) grad[c] -= 2.0 * design(n, c) * r;
        }
        Vector next(d);
        for (std::size_t c = 0; c < d; ++c) next[c] = z[c] - step * grad[c];
        for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += next[k * p + j] * next[k * p + j];
            const double nrm = std::sqrt(s);
            const double scale = nrm <= step * lambda ? 0.0 : 1.0 - step * lambda / nrm;
            for (std::size_t k = 0; k < K; ++k) next[k * p + j] *= scale;
        }
        const double obj = obj_of(next);
        if (obj > last_obj) { // restart momentum
            t = 1.0;
            z = theta;
            continue;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        for (std::size_t c = 0; c < d; ++c) z[c] = next[c] + (t - 1.0) / t_next * (next[c] - theta[c]);
        prev = theta;
        theta = next;
        t = t_next;
        last_obj = obj;
    }
    LinearSolution out;
    out.beta.assign(theta.begin(), theta.end() - 1);
    out.intercept = theta.back();
    out.objective = obj_of(theta);
    return out;
}

/// Spectral radius from a QR eigenvalue solve carried out in 50-digit
/// arithmetic, so even defective eigenvalues come out accurate to ~1e-16.
inline double radius_multiprecision(const Matrix& c) {
    using real = boost::multiprecision::cpp_bin_float_50;
    Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic> e(c.rows(), c.cols());
    for (std::size_t i = 0; i < c.rows(); ++i)
        for (std::size_t j = 0; j < c.cols(); ++j) e(i, j) = c(i, j);
    Eigen::EigenSolver<decltype(e)> solver(e, false);
    real best = 0;
    for (const auto& l : solver.eigenvalues()) {
        const real a = abs(l);
        if (a > best) best = a;
    }
    return static_cast<double>(best);
}

// Scalar reference forward pass written from the layer equations, sharing no
// code with the batched implementation.
inline double naive_forward(const nngc::ComponentMLP& m, std::span<const double> x) {
    const std::size_t p = m.series();
    if (m.arch.linear()) {
        double out = m.arch.output_bias ? m.output_bias : 0.0;
        for (std::size_t k = 0; k < m.lags(); ++k)
            for (std::size_t j = 0; j < p; ++j) out += m.first_layer[k](0, j) * x[k * p + j];
        return out;
    }
    auto sigma = [&](double z) {
        return m.arch.activation == nngc::Activation::tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
    };
    Vector h(m.arch.hidden[0]);
    for (std::size_t u = 0; u < h.size(); ++u) {
        double z = m.biases[0][u];
        for (std::size_t k = 0; k < m.lags(); ++k)
            for (std::size_t j = 0; j < p; ++j) z += m.first_layer[k](u, j) * x[k * p + j];
        h[u] = sigma(z);
    }
    for (std::size_t l = 0; l < m.deeper.size(); ++l) {
        Vector next(m.deeper[l].rows());
        for (std::size_t u = 0; u < next.size(); ++u) {
            double z = m.biases[l + 1][u];
            for (std::size_t v = 0; v < h.size(); ++v) z += m.deeper[l](u, v) * h[v];
            next[u] = sigma(z);
        }
        h = std::move(next);
    }
    double out = m.arch.output_bias ? m.output_bias : 0.0;
    for (std::size_t u = 0; u < h.size(); ++u) out += m.output_weights[u] * h[u];
    return out;
}

inline double naive_loss(const nngc::ComponentMLP& m, const nngc::LaggedDataset& d) {
    double s = 0.0;
    for (std::size_t n = 0; n < d.rows(); ++n) {
        const double r = naive_forward(m, d.inputs.row(n)) - d.targets[n];
        s += r * r;
    }
    return s;
}

// The group-prox minimizer is collinear with v, so search z = a v, a in [0, 1].
inline Vector group_prox_oracle(const Vector& v, double t) {
    const double n = nngc::norm2(v);
    auto obj = [&](double a) { return 0.5 * (1 - a) * (1 - a) * n * n + t * a * n; };
    double lo = 0.0, hi = 1.0;
    const double r = (std::sqrt(5.0) - 1) / 2;
    for (int it = 0; it < 200; ++it) {
        const double m1 = hi - r * (hi - lo), m2 = lo + r * (hi - lo);
        (obj(m1) < obj(m2) ? hi : lo) = obj(m1) < obj(m2) ? m2 : m1;
    }
    double a = 0.5 * (lo + hi);
    if (obj(0.0) <= obj(a)) a = 0.0;
    Vector z(v);
    for (double& x : z) x *= a;
    return z;
}

// Prox of t * sum_k ||z_{k..K}|| on a scalar-per-lag column, through its dual:
// z = v - sum_k u_k with u_k supported on the suffix k..K and ||u_k|| <= t.
// Block coordinate descent on the dual with exact ball projections.
inline Vector hierarchical_prox_oracle(const Vector& v, double t) {
    const std::size_t K = v.size();
    std::vector<std::vector<long double>> u(K, std::vector<long double>(K, 0.0L));
    for (int sweep = 0; sweep < 20000; ++sweep) {
        for (std::size_t g = 0; g < K; ++g) {
            std::vector<long double> w(K, 0.0L);
            long double sq = 0.0L;
            for (std::size_t k = g; k < K; ++k) {
                long double r = v[k];
                for (std::size_t h = 0; h < K; ++h)
                    if (h != g) r -= u[h][k];
                w[k] = r;
                sq += r * r;
            }
            const long double n = std::sqrt(sq);
            const long double scale = n > t ? t / n : 1.0L;
            for (std::size_t k = g; k < K; ++k) u[g][k] = w[k] * scale;
        }
    }
    Vector z(K);
    for (std::size_t k = 0; k < K; ++k) {
        long double r = v[k];
        for (std::size_t g = 0; g < K; ++g) r -= u[g][k];
        z[k] = static_cast<double>(r);
    }
    return z;
}

} // namespace oracle
