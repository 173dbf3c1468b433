#include <gtest/gtest.h>

#include <cmath>

#include "nngc/granger_eval.hpp"

using namespace nngc;

namespace {

GrangerGraph graph(std::size_t p, Vector w) { return GrangerGraph{Matrix(p, p, std::move(w))}; }

GrangerGraph scaled(const GrangerGraph& g, double c) {
    GrangerGraph out = g;
    for (double& v : out.weights.data()) v *= c;
    return out;
}

// Reference AUC: probability that a random positive outranks a random
// negative, ties counting one half (Mann-Whitney).
double mann_whitney(const std::vector<double>& pos, const std::vector<double>& neg) {
    double s = 0.0;
    for (double a : pos)
        for (double b : neg) s += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    return s / static_cast<double>(pos.size() * neg.size());
}

} // namespace

TEST(AssembleGraph, PlacesRowsByOutputSeries) {
    Architecture a;
    a.series = 2;
    a.lags = 1;
    a.hidden = {1};
    std::vector<ComponentMLP> models(2, ComponentMLP(a));
    EXPECT_EQ(assemble_graph(models), graph(2, {0, 0, 0, 0}));
    models[0].first_layer[0](0, 0) = 1.0;
    models[1].first_layer[0](0, 1) = -2.0;
    EXPECT_EQ(assemble_graph(models), graph(2, {1, 0, 0, 2}));

    a.lags = 2;
    models[1] = ComponentMLP(a);
    EXPECT_THROW((void)assemble_graph(models), std::invalid_argument);
}

TEST(AssembleGraph, ZeroingAColumnZeroesGraphColumn) {
    SeededRng rng(1);
    Architecture a;
    a.series = 4;
    a.lags = 2;
    std::vector<ComponentMLP> models;
    for (int i = 0; i < 4; ++i) models.push_back(init_model(a, rng));
    for (auto& m : models)
        for (auto& w : m.first_layer)
            for (std::size_t h = 0; h < w.rows(); ++h) w(h, 2) = 0.0;
    const GrangerGraph g = assemble_graph(models);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(g(i, 2), 0.0);
        EXPECT_GT(g(i, 0), 0.0);
    }
}

TEST(RocPoints, PerfectEmptyAndDenseEstimates) {
    const GrangerGraph truth = graph(2, {1, 0, 1, 1});
    const auto pts = roc_points(truth, std::vector<GrangerGraph>{graph(2, {0, 0, 0, 0}), truth,
                                                                 graph(2, {1, 1, 1, 1})});
    EXPECT_EQ(pts.front(), (RocPoint{0.0, 0.0}));
    EXPECT_EQ(pts.back(), (RocPoint{1.0, 1.0}));
    EXPECT_NE(std::find(pts.begin(), pts.end(), RocPoint{0.0, 1.0}), pts.end());
    EXPECT_DOUBLE_EQ(auc(pts), 1.0);
}

TEST(RocPoints, DiagonalFlagChangesEntrySet) {
    const GrangerGraph truth = graph(2, {1, 0, 1, 1});
    // predicts only the diagonal
    const std::vector<GrangerGraph> est{graph(2, {1, 0, 0, 1})};
    const auto with = roc_points(truth, est, true);
    EXPECT_NE(std::find(with.begin(), with.end(), RocPoint{0.0, 2.0 / 3.0}), with.end());
    const auto without = roc_points(truth, est, false);
    EXPECT_NE(std::find(without.begin(), without.end(), RocPoint{0.0, 0.0}), without.end());
}

TEST(RocPoints, DegenerateTruthIsError) {
    const std::vector<GrangerGraph> est{graph(2, {0, 0, 0, 0})};
    EXPECT_THROW((void)roc_points(graph(2, {1, 1, 1, 1}), est), DataError);
    EXPECT_THROW((void)roc_points(graph(2, {0, 0, 0, 0}), est), DataError);
    // identity truth has no positives once the diagonal is dropped
    EXPECT_THROW((void)roc_points(graph(2, {1, 0, 0, 1}), est, false), DataError);
}

TEST(Auc, HandComputedCurves) {
    EXPECT_DOUBLE_EQ(auc({{0, 0}, {0, 1}, {1, 1}}), 1.0);
    EXPECT_DOUBLE_EQ(auc({{0, 0}, {1, 1}}), 0.5);
    EXPECT_DOUBLE_EQ(auc({{0, 0}, {0.5, 0.5}, {1, 1}}), 0.5);
    // trapezoids 0.25*(0+0.5)/2 + 0.75*(0.5+1)/2
    EXPECT_DOUBLE_EQ(auc({{1, 1}, {0.25, 0.5}, {0, 0}}), 0.0625 + 0.5625);
    // ties keep the largest TPR
    EXPECT_DOUBLE_EQ(auc({{0, 0}, {0, 0.4}, {0, 1}, {1, 1}}), 1.0);
}

TEST(Auc, AllZeroEstimatesGiveChance) {
    const GrangerGraph truth = graph(3, {1, 0, 1, 0, 1, 0, 0, 1, 1});
    const std::vector<GrangerGraph> zeros(5, graph(3, Vector(9, 0.0)));
    EXPECT_DOUBLE_EQ(auc(roc_points(truth, zeros)), 0.5);
}

TEST(Auc, InvariantToPositiveScaling) {
    SeededRng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t p = 3 + rng.below(4);
        GrangerGraph truth{Matrix(p, p)};
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) truth.weights(i, j) = (i == j || rng.bernoulli(0.3)) ? 1.0 : 0.0;
        truth.weights(0, 1) = 0.0;
        std::vector<GrangerGraph> est;
        for (int n = 0; n < 6; ++n) {
            GrangerGraph g{Matrix(p, p)};
            for (double& v : g.weights.data()) v = rng.bernoulli(0.2 + 0.1 * n) ? rng.uniform() : 0.0;
            est.push_back(g);
        }
        const double c = 0.001 + 1000.0 * rng.uniform();
        std::vector<GrangerGraph> est_scaled;
        for (const auto& g : est) est_scaled.push_back(scaled(g, c));
        EXPECT_EQ(roc_points(truth, est), roc_points(truth, est_scaled));
        EXPECT_EQ(auc(roc_points(truth, est)), auc(roc_points(truth, est_scaled)));
    }
}

TEST(Auc, ScoreModeMatchesMannWhitneyAndComplement) {
    SeededRng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t p = 4 + rng.below(3);
        GrangerGraph truth{Matrix(p, p)}, scores{Matrix(p, p)}, reversed{Matrix(p, p)};
        std::vector<double> pos, neg;
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < p; ++j) {
                const bool edge = (i + j) % 3 == 0;
                truth.weights(i, j) = edge ? 1.0 : 0.0;
                // a few tied scores on purpose
                const double s = std::round(10.0 * (rng.uniform() + (edge ? 0.3 : 0.0))) / 10.0;
                scores.weights(i, j) = s;
                reversed.weights(i, j) = 2.0 - s;
                (edge ? pos : neg).push_back(s);
            }
        }
        const double a = staircase_auc(score_roc_points(truth, scores));
        EXPECT_NEAR(a, mann_whitney(pos, neg), 1e-12);
        EXPECT_NEAR(staircase_auc(score_roc_points(truth, reversed)), 1.0 - a, 1e-12);
    }
}

TEST(LambdaGrid, LogSpacedAndDescending) {
    const Vector g = lambda_grid(50.0, 20, 100.0);
    ASSERT_EQ(g.size(), 20u);
    EXPECT_EQ(g.front(), 50.0);
    EXPECT_NEAR(g.back(), 0.5, 1e-12);
    for (std::size_t n = 1; n < g.size(); ++n) {
        EXPECT_LT(g[n], g[n - 1]);
        EXPECT_NEAR(g[n] / g[n - 1], std::pow(0.01, 1.0 / 19.0), 1e-12);
    }
    EXPECT_THROW((void)lambda_grid(0.0, 20, 100.0), DataError);
    EXPECT_THROW(check_grid(Vector{1.0, 2.0}), ConfigError);
}

TEST(LambdaMax, ZeroesEveryLinearFit) {
    GeneratorConfig gen;
    gen.var.p = 4;
    gen.length = 150;
    const auto ts = standardize(generate(gen, 5).series).first;
    const double lmax = lambda_max_linear(ts, 2);
    SweepConfig sc;
    sc.arch.lags = 2;
    sc.arch.hidden.clear();
    sc.optimizer.rel_tol = 1e-13;
    sc.optimizer.max_iters = 200000;
    sc.lambdas = {lmax * 1.0001, lmax * 0.7};
    const SweepResult r = run_sweep(ts, sc);
    EXPECT_EQ(count_edges(r.graphs[0]), 0u);
    EXPECT_GT(count_edges(r.graphs[1]), 0u);
}

TEST(RunSweep, LinearPathIsMonotoneAndDeterministic) {
    GeneratorConfig gen;
    gen.var.p = 5;
    gen.var.lags = 2;
    gen.length = 300;
    const auto data = generate(gen, 6);
    const auto ts = standardize(data.series).first;
    SweepConfig sc;
    sc.arch.lags = 2;
    sc.arch.hidden.clear();
    sc.optimizer.rel_tol = 1e-10;
    sc.lambdas = lambda_grid(lambda_max_linear(ts, 2), 8, 100.0);
    sc.seed = 3;
    const SweepResult r = run_sweep(ts, sc);
    ASSERT_EQ(r.graphs.size(), 8u);
    for (std::size_t n = 1; n < 8; ++n) {
        EXPECT_GE(count_edges(r.graphs[n]), count_edges(r.graphs[n - 1]));
    }
    const auto pts = roc_points(data.truth, r.graphs);
    for (std::size_t n = 1; n < pts.size(); ++n) EXPECT_GE(pts[n].tpr, pts[n - 1].tpr);
    sc.jobs = 3;
    const SweepResult again = run_sweep(ts, sc);
    for (std::size_t n = 0; n < 8; ++n) EXPECT_EQ(r.graphs[n], again.graphs[n]);
}

TEST(RunSweep, HierarchicalProfilesAreSuffixes) {
    GeneratorConfig gen;
    gen.var.p = 4;
    gen.length = 200;
    const auto ts = standardize(generate(gen, 7).series).first;
    SweepConfig sc;
    sc.arch.lags = 4;
    sc.arch.hidden = {4};
    sc.penalty = PenaltyKind::hierarchical;
    sc.optimizer.max_iters = 300;
    sc.lambdas = lambda_grid(lambda_max_linear(ts, 4), 5, 20.0);
    const SweepResult r = run_sweep(ts, sc);
    for (const auto& per_lambda : r.models)
        for (const auto& m : per_lambda) EXPECT_TRUE(has_suffix_sparsity(m));
    EXPECT_EQ(r.lag_profiles[0].size(), 4u);
    EXPECT_EQ(r.lag_profiles[0][0].cols(), 4u);
}

TEST(RunExperiment, RepeatsExactly) {
    ExperimentSpec spec;
    spec.generator.var.p = 4;
    spec.generator.length = 120;
    spec.arch.lags = 2;
    spec.arch.hidden = {3};
    spec.optimizer.max_iters = 100;
    spec.grid.points = 4;
    spec.seeds = {0, 1};
    const auto a = run_experiment(spec);
    const auto b = run_experiment(spec);
    ASSERT_EQ(a.rows.size(), 2u);
    for (std::size_t n = 0; n < 2; ++n) {
        EXPECT_EQ(a.rows[n].auc, b.rows[n].auc);
        EXPECT_EQ(a.rows[n].auc_offdiag, b.rows[n].auc_offdiag);
        EXPECT_GE(a.rows[n].auc, 0.0);
        EXPECT_LE(a.rows[n].auc, 1.0);
    }
}
