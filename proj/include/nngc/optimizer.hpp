#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cmlp.hpp"
#include "errors.hpp"
#include "penalties.hpp"

namespace nngc {

struct OptimizerConfig {
    double initial_step = 1e-2;
    std::size_t max_iters = 20000;
    double rel_tol = 1e-6;
    bool backtracking = true;
    double backtrack_factor = 0.5;
    double min_step = 1e-12;

    void validate() const {
        if (!(initial_step > 0.0)) throw ConfigError("optimizer: initial_step must be > 0");
        if (!(rel_tol > 0.0)) throw ConfigError("optimizer: rel_tol must be > 0");
        if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0))
            throw ConfigError("optimizer: backtrack_factor must lie in (0, 1)");
        if (!(min_step > 0.0 && min_step < initial_step))
            throw ConfigError("optimizer: min_step must satisfy 0 < min_step < initial_step");
    }

    friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct FitResult {
    ComponentMLP model;
    Vector objective_trace; // entry 0 is the starting objective
    std::size_t iterations_run = 0;
    bool converged = false;
    double final_step = 0.0;
};

struct ProgressLine {
    std::size_t iteration;
    double objective;
    double step;
    std::size_t nonzero_groups;
};

using ProgressSink = std::function<void(const ProgressLine&)>;

[[nodiscard]] inline double objective(const ComponentMLP& m, const LaggedDataset& d,
                                      const PenaltySpec& spec) {
    return loss(m, d) + penalty_value(spec, m);
}

[[nodiscard]] inline std::size_t nonzero_groups(const ComponentMLP& m) {
    std::size_t n = 0;
    for (double w : granger_weights(m)) n += (w > 0.0);
    return n;
}

namespace detail {

inline void require_finite(const ModelGradient& g) {
    bool ok = true;
    g.for_each_block([&](auto s) {
        for (double v : s) ok = ok && std::isfinite(v);
    });
    if (!ok) throw OptimizationError("non-finite gradient");
}

// model - step * g, then the penalty prox on the first layer.
inline ComponentMLP prox_candidate(const ComponentMLP& m, const ModelGradient& g,
                                   const PenaltySpec& spec, double step) {
    ComponentMLP next = m;
    std::size_t block = 0;
    std::vector<std::span<const double>> grads;
    g.for_each_block([&](std::span<const double> s) { grads.push_back(s); });
    next.for_each_block([&](std::span<double> s) {
        const auto gs = grads[block++];
        for (std::size_t i = 0; i < s.size(); ++i) s[i] -= step * gs[i];
    });
    apply_prox(spec, next, step);
    return next;
}

// <g, next - m> and ||next - m||^2 over all parameters.
inline std::pair<double, double> step_terms(const ComponentMLP& m, const ComponentMLP& next,
                                            const ModelGradient& g) {
    const Vector a = flatten(m);
    const Vector b = flatten(next);
    const Vector gv = flatten(g);
    double inner = 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = b[i] - a[i];
        inner += gv[i] * d;
        sq += d * d;
    }
    return {inner, sq};
}

} // namespace detail

/// One proximal gradient step with a fixed step size. Returns the new model
/// and its penalized objective.
[[nodiscard]] inline std::pair<ComponentMLP, double> prox_step(const ComponentMLP& m,
                                                               const LaggedDataset& d,
                                                               const PenaltySpec& spec,
                                                               double step) {
    if (!(step > 0.0)) throw std::invalid_argument("prox_step: step must be > 0");
    const ModelGradient g = grad(m, d);
    detail::require_finite(g);
    ComponentMLP next = detail::prox_candidate(m, g, spec, step);
    const double obj = objective(next, d, spec);
    return {std::move(next), obj};
}

/// Proximal gradient descent from `start`.
///
/// With backtracking, the step carried over from the previous iteration is
/// multiplied by backtrack_factor until
///   loss(next) <= loss(m) + <grad, next - m> + ||next - m||^2 / (2 step),
/// which makes the objective trace non-increasing. Stops when the relative
/// objective change drops below rel_tol or after max_iters iterations.
[[nodiscard]] inline FitResult optimize(ComponentMLP start, const LaggedDataset& d,
                                        const PenaltySpec& spec, const OptimizerConfig& opt,
                                        const ProgressSink& sink = {}) {
    opt.validate();
    check_compatible(start, d);
    if (d.rows() == 0) throw DataError("fit: dataset is empty");

    FitResult res;
    res.model = std::move(start);
    double step = opt.initial_step;
    double current_loss = 0.0;
    ModelGradient g = grad(res.model, d, &current_loss);
    double current_obj = current_loss + penalty_value(spec, res.model);
    if (!std::isfinite(current_obj)) throw OptimizationError("non-finite starting objective");
    res.objective_trace.push_back(current_obj);

    for (std::size_t it = 1; it <= opt.max_iters; ++it) {
        detail::require_finite(g);
        ComponentMLP next;
        double next_loss = 0.0;
        for (;;) {
            next = detail::prox_candidate(res.model, g, spec, step);
            next_loss = loss(next, d);
            if (!opt.backtracking) break;
            const auto [inner, sq] = detail::step_terms(res.model, next, g);
            if (sq == 0.0) break; // already a fixed point of the prox map
            const double slack = 1e-14 * std::max(1.0, std::abs(current_loss));
            if (std::isfinite(next_loss) &&
                next_loss <= current_loss + inner + sq / (2.0 * step) + slack) {
                break;
            }
            step *= opt.backtrack_factor;
            if (step < opt.min_step) {
                throw OptimizationError("step size fell below min_step (" +
                                        std::to_string(opt.min_step) + ") at iteration " +
                                        std::to_string(it));
            }
        }
        const double next_obj = next_loss + penalty_value(spec, next);
        if (!std::isfinite(next_obj)) {
            throw OptimizationError("non-finite objective at iteration " + std::to_string(it));
        }
        res.model = std::move(next);
        res.objective_trace.push_back(next_obj);
        res.iterations_run = it;
        if (sink) sink({it, next_obj, step, nonzero_groups(res.model)});

        const double change = std::abs(current_obj - next_obj);
        current_obj = next_obj;
        if (change == 0.0 ||
            change < opt.rel_tol * std::max(std::abs(res.objective_trace[it - 1]),
                                            std::numeric_limits<double>::min())) {
            res.converged = true;
            break;
        }
        g = grad(res.model, d, &current_loss);
        }
    res.final_step = step;
    return res;
}

[[nodiscard]] inline FitResult fit(const LaggedDataset& d, const PenaltySpec& spec,
                                   const Architecture& arch, const OptimizerConfig& opt,
                                   std::uint64_t seed, const ProgressSink& sink = {}) {
    if (arch.series != d.series || arch.lags != d.lags) {
        throw ConfigError("fit: architecture (p=" + std::to_string(arch.series) +
                          ", K=" + std::to_string(arch.lags) + ") does not match dataset (p=" +
                          std::to_string(d.series) + ", K=" + std::to_string(d.lags) + ")");
    }
    SeededRng rng(seed);
    return optimize(init_model(arch, rng), d, spec, opt, sink);
}

/// Continues from a previous solution, typically at a new lambda.
[[nodiscard]] inline FitResult warm_start_fit(const FitResult& previous, const LaggedDataset& d,
                                              const PenaltySpec& spec, const OptimizerConfig& opt,
                                              const ProgressSink& sink = {}) {
    const auto& arch = previous.model.arch;
    if (arch.series != d.series || arch.lags != d.lags) {
        throw ConfigError("warm start: previous model (p=" + std::to_string(arch.series) +
                          ", K=" + std::to_string(arch.lags) + ") does not match dataset (p=" +
                          std::to_string(d.series) + ", K=" + std::to_string(d.lags) + ")");
    }
    return optimize(previous.model, d, spec, opt, sink);
}

} // namespace nngc
