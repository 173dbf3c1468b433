// nngc: simulate data, fit component networks, sweep the penalty path, and
// collect summaries.

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nngc/cli.hpp"

namespace {

using namespace nngc;
using namespace nngc::cli;

struct GlobalFlags {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    bool quiet = false;
};

ExperimentConfig resolve_config(const GlobalFlags& g) {
    ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{} : load_config(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (g.jobs) cfg.jobs = *g.jobs;
    validate(cfg);
    return cfg;
}

void add_global_flags(CLI::App& app, GlobalFlags& g) {
    app.add_option("--config", g.config_path, "INI experiment config")->check(CLI::ExistingFile);
    app.add_option("--out", g.out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", g.seed, "overrides [run] seed");
    app.add_option("--jobs", g.jobs, "worker threads, 0 = all cores");
    app.add_flag("--quiet", g.quiet, "no progress on stderr");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Neural Granger causality with structured sparsity"};
    app.require_subcommand(1);
    GlobalFlags g;

    auto* simulate = app.add_subcommand("simulate", "generate a dataset and its true graph");
    add_global_flags(*simulate, g);

    std::string dataset;
    auto* fit_cmd = app.add_subcommand("fit", "fit every series at one penalty weight");
    add_global_flags(*fit_cmd, g);
    fit_cmd->add_option("dataset", dataset, "CSV with header t,s0,...")->required();

    std::string truth;
    auto* sweep = app.add_subcommand("sweep", "fit the penalty path and score it");
    add_global_flags(*sweep, g);
    sweep->add_option("dataset", dataset, "CSV with header t,s0,...")->required();
    sweep->add_option("truth", truth, "p x p 0/1 matrix")->required();

    std::vector<std::string> dirs;
    auto* report = app.add_subcommand("report", "merge summary.csv files");
    add_global_flags(*report, g);
    report->add_option("dirs", dirs, "sweep output directories")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_usage;
    }

    try {
        const Options opt{g.out_dir, g.quiet};
        if (*simulate) {
            cmd_simulate(resolve_config(g), opt);
        } else if (*fit_cmd) {
            cmd_fit(resolve_config(g), dataset, opt);
        } else if (*sweep) {
            cmd_sweep(resolve_config(g), dataset, truth, opt);
        } else if (*report) {
            std::vector<fs::path> paths(dirs.begin(), dirs.end());
            cmd_report(paths, opt);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "nngc: %s\n", e.what());
        return exit_code_for(e);
    }
    return exit_ok;
}
