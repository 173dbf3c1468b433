#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cmlp.hpp"
#include "errors.hpp"
#include "optimizer.hpp"
#include "parallel.hpp"
#include "penalties.hpp"
#include "timeseries.hpp"

namespace nngc {

/// weights(i, j) = granger_weights(models[i])[j].
[[nodiscard]] inline GrangerGraph assemble_graph(std::span<const ComponentMLP> models) {
    const std::size_t p = models.size();
    if (p == 0) throw std::invalid_argument("assemble_graph: no models");
    const std::size_t lags = models.front().lags();
    GrangerGraph g{Matrix(p, p)};
    for (std::size_t i = 0; i < p; ++i) {
        if (models[i].series() != p || models[i].lags() != lags) {
            throw std::invalid_argument("assemble_graph: model " + std::to_string(i) +
                                        " has inconsistent shape");
        }
        const Vector w = granger_weights(models[i]);
        std::copy(w.begin(), w.end(), g.weights.row(i).begin());
    }
    return g;
}

[[nodiscard]] inline std::size_t count_edges(const GrangerGraph& g, bool include_diagonal = true) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < g.size(); ++j)
            if ((include_diagonal || i != j) && g(i, j) > 0.0) ++n;
    return n;
}

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;

    friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

namespace detail {

struct Confusion {
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

inline Confusion count_truth(const GrangerGraph& truth, bool include_diagonal) {
    Confusion c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        for (std::size_t j = 0; j < truth.size(); ++j) {
            if (!include_diagonal && i == j) continue;
            (truth(i, j) > 0.0 ? c.positives : c.negatives) += 1;
        }
    }
    if (c.positives == 0 || c.negatives == 0) {
        throw DataError("ROC needs at least one positive and one negative truth entry");
    }
    return c;
}

inline void sort_points(std::vector<RocPoint>& pts) {
    std::sort(pts.begin(), pts.end(), [](const RocPoint& a, const RocPoint& b) {
        return a.fpr < b.fpr || (a.fpr == b.fpr && a.tpr < b.tpr);
    });
}

} // namespace detail

/// One ROC point per estimated graph (edge predicted iff weight > 0), plus
/// the (0,0) and (1,1) endpoints, sorted by FPR.
[[nodiscard]] inline std::vector<RocPoint> roc_points(const GrangerGraph& truth,
                                                      std::span<const GrangerGraph> estimates,
                                                      bool include_diagonal = true) {
    const auto totals = detail::count_truth(truth, include_diagonal);
    std::vector<RocPoint> pts{{0.0, 0.0}, {1.0, 1.0}};
    for (const auto& est : estimates) {
        if (est.size() != truth.size()) throw DataError("ROC: estimate size does not match truth");
        std::size_t tp = 0;
        std::size_t fp = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            for (std::size_t j = 0; j < truth.size(); ++j) {
                if ((!include_diagonal && i == j) || !(est(i, j) > 0.0)) continue;
                (truth(i, j) > 0.0 ? tp : fp) += 1;
            }
        }
        pts.push_back({static_cast<double>(fp) / static_cast<double>(totals.negatives),
                       static_cast<double>(tp) / static_cast<double>(totals.positives)});
    }
    detail::sort_points(pts);
    return pts;
}

/// Alternative mode: ROC from thresholding the weights of a single graph at
/// every distinct value.
[[nodiscard]] inline std::vector<RocPoint> score_roc_points(const GrangerGraph& truth,
                                                            const GrangerGraph& scores,
                                                            bool include_diagonal = true) {
    const auto totals = detail::count_truth(truth, include_diagonal);
    std::vector<std::pair<double, bool>> entries;
    for (std::size_t i = 0; i < truth.size(); ++i)
        for (std::size_t j = 0; j < truth.size(); ++j)
            if (include_diagonal || i != j) entries.emplace_back(scores(i, j), truth(i, j) > 0.0);
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<RocPoint> pts{{0.0, 0.0}};
    std::size_t tp = 0;
    std::size_t fp = 0;
    for (std::size_t n = 0; n < entries.size(); ++n) {
        (entries[n].second ? tp : fp) += 1;
        if (n + 1 == entries.size() || entries[n + 1].first != entries[n].first) {
            pts.push_back({static_cast<double>(fp) / static_cast<double>(totals.negatives),
                           static_cast<double>(tp) / static_cast<double>(totals.positives)});
        }
    }
    pts.push_back({1.0, 1.0});
    detail::sort_points(pts);
    return pts;
}

/// Area under a threshold-sweep curve from score_roc_points. Consecutive
/// points are joined in path order, so a vertical run at one FPR is entered
/// at its lowest TPR; tied scores contribute a diagonal segment.
[[nodiscard]] inline double staircase_auc(std::vector<RocPoint> pts) {
    detail::sort_points(pts);
    double area = 0.0;
    for (std::size_t n = 1; n < pts.size(); ++n)
        area += (pts[n].fpr - pts[n - 1].fpr) * 0.5 * (pts[n].tpr + pts[n - 1].tpr);
    return std::clamp(area, 0.0, 1.0);
}

/// Trapezoidal area under the ROC curve. Points sharing an FPR collapse to
/// the largest TPR.
[[nodiscard]] inline double auc(std::vector<RocPoint> pts) {
    detail::sort_points(pts);
    std::vector<RocPoint> merged;
    for (const auto& pt : pts) {
        if (!merged.empty() && merged.back().fpr == pt.fpr) {
            merged.back().tpr = std::max(merged.back().tpr, pt.tpr);
        } else {
            merged.push_back(pt);
        }
    }
    double area = 0.0;
    for (std::size_t n = 1; n < merged.size(); ++n) {
        area += (merged[n].fpr - merged[n - 1].fpr) * 0.5 * (merged[n].tpr + merged[n - 1].tpr);
    }
    return std::clamp(area, 0.0, 1.0);
}

/// Smallest lambda for which the all-zero first layer solves the linear
/// (zero hidden layer) group problem for every series:
/// max_{i,j} ||2 X_j^T (y_i - mean(y_i))||, the residual taken after fitting
/// the output bias alone.
[[nodiscard]] inline double lambda_max_linear(const TimeSeriesMatrix& ts, std::size_t lags) {
    const std::size_t p = ts.series();
    double best = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        const LaggedDataset d = build_lagged(ts, lags, i);
        double mean = 0.0;
        for (double y : d.targets) mean += y;
        mean /= static_cast<double>(d.rows());
        Vector corr(p * lags, 0.0);
        for (std::size_t n = 0; n < d.rows(); ++n) {
            const double r = d.targets[n] - mean;
            const auto x = d.inputs.row(n);
            for (std::size_t c = 0; c < corr.size(); ++c) corr[c] += 2.0 * r * x[c];
        }
        for (std::size_t j = 0; j < p; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < lags; ++k) s += corr[k * p + j] * corr[k * p + j];
            best = std::max(best, std::sqrt(s));
        }
    }
    return best;
}

/// `points` log-spaced values from lambda_max down to lambda_max / ratio.
[[nodiscard]] inline Vector lambda_grid(double lambda_max, std::size_t points, double ratio) {
    if (!(lambda_max > 0.0)) throw DataError("lambda grid: lambda_max must be > 0");
    if (points < 2) throw ConfigError("lambda grid: need at least 2 points");
    if (!(ratio > 1.0)) throw ConfigError("lambda grid: ratio must be > 1");
    Vector grid(points);
    const double top = std::log(lambda_max);
    const double bottom = std::log(lambda_max / ratio);
    for (std::size_t n = 0; n < points; ++n) {
        const double frac = static_cast<double>(n) / static_cast<double>(points - 1);
        grid[n] = std::exp(top + frac * (bottom - top));
    }
    grid.front() = lambda_max;
    return grid;
}

/// Sees every finished fit as (lambda index, series, result). Called from
/// worker threads, so it must be safe to call concurrently.
using FitObserver = std::function<void(std::size_t, std::size_t, const FitResult&)>;

struct SweepConfig {
    Architecture arch;               // series/lags taken from here
    PenaltyKind penalty = PenaltyKind::group;
    OptimizerConfig optimizer;
    Vector lambdas;                  // strictly descending
    std::uint64_t seed = 0;
    std::size_t jobs = 0;
    FitObserver observer;
};

struct SweepResult {
    Vector lambdas;
    std::vector<GrangerGraph> graphs;                 // [lambda]
    std::vector<std::vector<Matrix>> lag_profiles;    // [lambda][series] p x K
    std::vector<std::vector<ComponentMLP>> models;    // [lambda][series]
    std::vector<std::vector<std::size_t>> iterations; // [lambda][series]
    std::vector<std::vector<bool>> converged;         // [lambda][series]

    /// Nonzero (input series, lag) blocks summed over all output series.
    [[nodiscard]] std::size_t selected_lag_pairs(std::size_t lambda_index) const {
        std::size_t n = 0;
        for (const auto& prof : lag_profiles[lambda_index])
            for (double v : prof.data()) n += (v > 0.0);
        return n;
    }
};

/// Seed of the model initialisation for output series i.
[[nodiscard]] inline std::uint64_t series_seed(std::uint64_t seed, std::size_t i) {
    return SeededRng(seed).child(1000 + i).seed();
}

inline void check_grid(std::span<const double> lambdas) {
    if (lambdas.empty()) throw ConfigError("lambda grid is empty");
    for (std::size_t n = 0; n < lambdas.size(); ++n) {
        if (!(lambdas[n] >= 0.0)) throw ConfigError("lambda grid values must be >= 0");
        if (n > 0 && !(lambdas[n] < lambdas[n - 1]))
            throw ConfigError("lambda grid must be strictly descending");
    }
}

/// Fits all p series along the lambda grid. Each series starts cold at the
/// first lambda and warm-starts from its previous solution afterwards; series
/// run in parallel.
[[nodiscard]] inline SweepResult run_sweep(const TimeSeriesMatrix& ts, const SweepConfig& cfg) {
    check_grid(cfg.lambdas);
    const std::size_t p = ts.series();
    Architecture arch = cfg.arch;
    arch.series = p;
    const std::size_t n_lambda = cfg.lambdas.size();

    SweepResult res;
    res.lambdas = cfg.lambdas;
    res.models.assign(n_lambda, std::vector<ComponentMLP>(p));
    res.iterations.assign(n_lambda, std::vector<std::size_t>(p, 0));
    res.converged.assign(n_lambda, std::vector<bool>(p, false));

    // vector<bool> is not safe for concurrent element writes.
    std::vector<std::vector<char>> converged(n_lambda, std::vector<char>(p, 0));
    parallel_for(p, cfg.jobs, [&](std::size_t i) {
        const LaggedDataset d = build_lagged(ts, arch.lags, i);
        FitResult prev;
        for (std::size_t n = 0; n < n_lambda; ++n) {
            const PenaltySpec spec(cfg.penalty, cfg.lambdas[n]);
            FitResult cur = n == 0 ? fit(d, spec, arch, cfg.optimizer, series_seed(cfg.seed, i))
                                   : warm_start_fit(prev, d, spec, cfg.optimizer);
            if (cfg.observer) cfg.observer(n, i, cur);
            res.models[n][i] = cur.model;
            res.iterations[n][i] = cur.iterations_run;
            converged[n][i] = cur.converged ? 1 : 0;
            prev = std::move(cur);
        }
    });
    for (std::size_t n = 0; n < n_lambda; ++n) {
        for (std::size_t i = 0; i < p; ++i) res.converged[n][i] = converged[n][i] != 0;
        res.graphs.push_back(assemble_graph(res.models[n]));
        std::vector<Matrix> profiles;
        for (const auto& m : res.models[n]) profiles.push_back(lag_profile(m));
        res.lag_profiles.push_back(std::move(profiles));
    }
    return res;
}

struct GridSpec {
    std::size_t points = 20;
    double ratio = 100.0;
    Vector explicit_lambdas; // used instead of the data-driven grid when non-empty

    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

[[nodiscard]] inline Vector make_grid(const TimeSeriesMatrix& standardized, std::size_t lags,
                                      const GridSpec& spec) {
    if (!spec.explicit_lambdas.empty()) {
        check_grid(spec.explicit_lambdas);
        return spec.explicit_lambdas;
    }
    return lambda_grid(lambda_max_linear(standardized, lags), spec.points, spec.ratio);
}

struct ExperimentSpec {
    GeneratorConfig generator;
    Architecture arch;
    PenaltyKind penalty = PenaltyKind::group;
    OptimizerConfig optimizer;
    GridSpec grid;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    bool standardize_data = true;
    std::size_t jobs = 0;
    FitObserver observer;
};

struct ExperimentRow {
    std::uint64_t seed = 0;
    double auc = 0.0;          // diagonal included
    double auc_offdiag = 0.0;  // diagonal excluded
};

struct ExperimentResult {
    std::vector<ExperimentRow> rows;
    std::vector<SweepResult> sweeps;
    std::vector<GrangerGraph> truths;

    [[nodiscard]] double mean_auc(bool include_diagonal = true) const {
        double s = 0.0;
        for (const auto& r : rows) s += include_diagonal ? r.auc : r.auc_offdiag;
        return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
    }
};

/// Per seed: generate, standardize, sweep the grid, score against the truth.
[[nodiscard]] inline ExperimentResult run_experiment(const ExperimentSpec& spec) {
    ExperimentResult out;
    for (std::uint64_t seed : spec.seeds) {
        const GeneratedData data = generate(spec.generator, seed);
        const TimeSeriesMatrix ts =
            spec.standardize_data ? standardize(data.series).first : data.series;
        SweepConfig sc;
        sc.arch = spec.arch;
        sc.penalty = spec.penalty;
        sc.optimizer = spec.optimizer;
        sc.lambdas = make_grid(ts, spec.arch.lags, spec.grid);
        sc.seed = seed;
        sc.jobs = spec.jobs;
        sc.observer = spec.observer;
        SweepResult sweep = run_sweep(ts, sc);
        ExperimentRow row;
        row.seed = seed;
        row.auc = auc(roc_points(data.truth, sweep.graphs, true));
        row.auc_offdiag = auc(roc_points(data.truth, sweep.graphs, false));
        out.rows.push_back(row);
        out.sweeps.push_back(std::move(sweep));
        out.truths.push_back(data.truth);
    }
    return out;
}

} // namespace nngc
