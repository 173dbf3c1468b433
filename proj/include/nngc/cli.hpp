#pragma once

#include <algorithm>
#include <cerrno>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "errors.hpp"
#include "granger_eval.hpp"

namespace nngc::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
    exit_ok = 0,
    exit_usage = 1,
    exit_config = 2,
    exit_data = 3,
    exit_optimization = 4,
    exit_io = 5,
};

/// Everything a command needs. Every constant the library would otherwise
/// default is visible here and in the config file.
struct ExperimentConfig {
    GeneratorConfig generator;
    Architecture arch;
    PenaltyKind penalty = PenaltyKind::group;
    double lambda = 0.0; // used by `fit`
    GridSpec grid;
    OptimizerConfig optimizer;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    bool include_diagonal = true;
    bool standardize_data = true;
    std::uint64_t seed = 0;
    std::size_t jobs = 0;

    ExperimentConfig() { arch.lags = 3; }

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// ---------------------------------------------------------------- formatting

/// Shortest text that parses back to the same double.
[[nodiscard]] inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

[[nodiscard]] inline std::string format_hex(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

/// Strict number parse: the whole field must be consumed.
[[nodiscard]] inline bool parse_double(std::string_view text, double& out) {
    const std::string s(text);
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && errno != ERANGE;
}

[[nodiscard]] inline bool parse_u64(std::string_view text, std::uint64_t& out) {
    const std::string s(text);
    if (s.empty() || s.front() == '-' || s.front() == '+') return false;
    char* end = nullptr;
    errno = 0;
    out = std::strtoull(s.c_str(), &end, 10);
    return end == s.c_str() + s.size() && errno != ERANGE;
}

[[nodiscard]] inline std::string trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return std::string(s.substr(a, b - a + 1));
}

[[nodiscard]] inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

// ------------------------------------------------------------------- config

namespace detail {

using boost::property_tree::ptree;

// Reads typed fields from one INI tree and rejects anything it did not read.
class FieldReader {
public:
    explicit FieldReader(const ptree& tree) : tree_(tree) {}

    template <class T, class Parse>
    void field(const std::string& key, T& target, Parse&& parse) {
        seen_.insert(key);
        const auto node = tree_.get_child_optional(ptree::path_type(key, '.'));
        if (!node) return;
        const std::string text = trim(node->data());
        if (!parse(text, target)) {
            throw ConfigError("config field '" + key + "': cannot parse '" + text + "'");
        }
    }

    void number(const std::string& key, double& v) {
        field(key, v, [](const std::string& t, double& o) { return parse_double(t, o); });
    }
    void count(const std::string& key, std::size_t& v) {
        field(key, v, [](const std::string& t, std::size_t& o) {
            std::uint64_t u = 0;
            if (!parse_u64(t, u)) return false;
            o = static_cast<std::size_t>(u);
            return true;
        });
    }
    void u64(const std::string& key, std::uint64_t& v) {
        field(key, v, [](const std::string& t, std::uint64_t& o) { return parse_u64(t, o); });
    }
    void flag(const std::string& key, bool& v) {
        field(key, v, [](const std::string& t, bool& o) {
            if (t == "true" || t == "1") return o = true, true;
            if (t == "false" || t == "0") return o = false, true;
            return false;
        });
    }
    template <class E, class ParseEnum>
    void choice(const std::string& key, E& v, ParseEnum&& parse_enum) {
        field(key, v, [&](const std::string& t, E& o) {
            o = parse_enum(t); // throws ConfigError with the valid names
            return true;
        });
    }
    void count_list(const std::string& key, std::vector<std::size_t>& v) {
        field(key, v, [](const std::string& t, std::vector<std::size_t>& o) {
            o.clear();
            if (t.empty()) return true;
            for (const auto& part : split(t, ',')) {
                std::uint64_t u = 0;
                if (!parse_u64(part, u)) return false;
                o.push_back(static_cast<std::size_t>(u));
            }
            return true;
        });
    }
    void u64_list(const std::string& key, std::vector<std::uint64_t>& v) {
        field(key, v, [](const std::string& t, std::vector<std::uint64_t>& o) {
            o.clear();
            if (t.empty()) return true;
            for (const auto& part : split(t, ',')) {
                std::uint64_t u = 0;
                if (!parse_u64(part, u)) return false;
                o.push_back(u);
            }
            return true;
        });
    }
    void number_list(const std::string& key, Vector& v) {
        field(key, v, [](const std::string& t, Vector& o) {
            o.clear();
            if (t.empty()) return true;
            for (const auto& part : split(t, ',')) {
                double d = 0.0;
                if (!parse_double(part, d)) return false;
                o.push_back(d);
            }
            return true;
        });
    }

    /// Unknown sections or keys are errors, so typos cannot pass silently.
    void reject_unknown() const {
        std::set<std::string> sections;
        for (const auto& key : seen_) sections.insert(key.substr(0, key.find('.')));
        for (const auto& [section, body] : tree_) {
            if (!sections.count(section)) {
                throw ConfigError(body.empty() && !body.data().empty()
                                      ? "config: key '" + section + "' outside any section"
                                      : "config: unknown section '" + section + "'");
            }
            for (const auto& [key, value] : body) {
                (void)value;
                if (!seen_.count(section + "." + key)) {
                    throw ConfigError("config: unknown field '" + section + "." + key + "'");
                }
            }
        }
    }

private:
    const ptree& tree_;
    std::set<std::string> seen_;
};

template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& fmt) {
    std::string out;
    for (std::size_t n = 0; n < v.size(); ++n) out += (n ? "," : "") + fmt(v[n]);
    return out;
}

} // namespace detail

inline void validate(const ExperimentConfig& c) {
    if (c.generator.length < 2) throw ConfigError("config generator.length: must be >= 2");
    if (c.generator.var.p == 0 || c.generator.lorenz.p == 0) throw ConfigError("config: p must be >= 1");
    if (c.arch.lags == 0) throw ConfigError("config model.lags: must be >= 1");
    for (std::size_t h : c.arch.hidden)
        if (h == 0) throw ConfigError("config model.hidden: widths must be >= 1");
    if (!(c.arch.init_scale >= 0.0)) throw ConfigError("config model.init_scale: must be >= 0");
    if (!(c.lambda >= 0.0)) throw ConfigError("config penalty.lambda: must be >= 0");
    if (c.grid.points < 2) throw ConfigError("config penalty.grid_points: must be >= 2");
    if (!(c.grid.ratio > 1.0)) throw ConfigError("config penalty.grid_ratio: must be > 1");
    if (!c.grid.explicit_lambdas.empty()) check_grid(c.grid.explicit_lambdas);
    if (c.seeds.empty()) throw ConfigError("config evaluation.seeds: need at least one seed");
    c.optimizer.validate();
}

/// INI text with every field, doubles written to round-trip exactly.
[[nodiscard]] inline std::string serialize_config(const ExperimentConfig& c) {
    using detail::join;
    std::ostringstream o;
    const auto& v = c.generator.var;
    const auto& l = c.generator.lorenz;
    o << "[generator]\n"
      << "kind = " << to_string(c.generator.kind) << "\n"
      << "length = " << c.generator.length << "\n\n"
      << "[var]\n"
      << "p = " << v.p << "\n"
      << "lags = " << v.lags << "\n"
      << "edge_prob = " << format_double(v.edge_prob) << "\n"
      << "magnitude = " << format_double(v.magnitude) << "\n"
      << "target_radius = " << format_double(v.target_radius) << "\n"
      << "noise_sigma = " << format_double(v.noise_sigma) << "\n"
      << "burn_in = " << v.burn_in << "\n\n"
      << "[lorenz]\n"
      << "p = " << l.p << "\n"
      << "forcing = " << format_double(l.forcing) << "\n"
      << "dt = " << format_double(l.dt) << "\n"
      << "noise_sigma = " << format_double(l.noise_sigma) << "\n"
      << "init_sigma = " << format_double(l.init_sigma) << "\n"
      << "burn_in = " << l.burn_in << "\n\n"
      << "[model]\n"
      << "lags = " << c.arch.lags << "\n"
      << "hidden = "
      << join<std::size_t>(c.arch.hidden, [](const std::size_t& h) { return std::to_string(h); })
      << "\n"
      << "activation = " << to_string(c.arch.activation) << "\n"
      << "output_bias = " << (c.arch.output_bias ? "true" : "false") << "\n"
      << "init_scale = " << format_double(c.arch.init_scale) << "\n\n"
      << "[penalty]\n"
      << "kind = " << to_string(c.penalty) << "\n"
      << "lambda = " << format_double(c.lambda) << "\n"
      << "grid_points = " << c.grid.points << "\n"
      << "grid_ratio = " << format_double(c.grid.ratio) << "\n"
      << "lambdas = "
      << join<double>(c.grid.explicit_lambdas, [](const double& x) { return format_double(x); })
      << "\n\n"
      << "[optimizer]\n"
      << "initial_step = " << format_double(c.optimizer.initial_step) << "\n"
      << "max_iters = " << c.optimizer.max_iters << "\n"
      << "rel_tol = " << format_double(c.optimizer.rel_tol) << "\n"
      << "backtracking = " << (c.optimizer.backtracking ? "true" : "false") << "\n"
      << "backtrack_factor = " << format_double(c.optimizer.backtrack_factor) << "\n"
      << "min_step = " << format_double(c.optimizer.min_step) << "\n\n"
      << "[evaluation]\n"
      << "seeds = "
      << join<std::uint64_t>(c.seeds, [](const std::uint64_t& s) { return std::to_string(s); })
      << "\n"
      << "include_diagonal = " << (c.include_diagonal ? "true" : "false") << "\n"
      << "standardize = " << (c.standardize_data ? "true" : "false") << "\n\n"
      << "[run]\n"
      << "seed = " << c.seed << "\n"
      << "jobs = " << c.jobs << "\n";
    return o.str();
}

/// Parses INI text; fields that are absent keep their defaults.
[[nodiscard]] inline ExperimentConfig parse_config(const std::string& text,
                                                   const std::string& origin = "config") {
    // Inline comments: ';' or '#' after whitespace ends the line's content.
    std::string cleaned;
    {
        std::istringstream raw(text);
        std::string line;
        while (std::getline(raw, line)) {
            for (std::size_t n = 1; n < line.size(); ++n) {
                if ((line[n] == ';' || line[n] == '#') && (line[n - 1] == ' ' || line[n - 1] == '\t')) {
                    line.resize(n);
                    break;
                }
            }
            cleaned += line + "\n";
        }
    }
    boost::property_tree::ptree tree;
    try {
        std::istringstream in(cleaned);
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    ExperimentConfig c;
    detail::FieldReader r(tree);
    try {
        r.choice("generator.kind", c.generator.kind, parse_generator_kind);
        r.count("generator.length", c.generator.length);
        auto& v = c.generator.var;
        r.count("var.p", v.p);
        r.count("var.lags", v.lags);
        r.number("var.edge_prob", v.edge_prob);
        r.number("var.magnitude", v.magnitude);
        r.number("var.target_radius", v.target_radius);
        r.number("var.noise_sigma", v.noise_sigma);
        r.count("var.burn_in", v.burn_in);
        auto& l = c.generator.lorenz;
        r.count("lorenz.p", l.p);
        r.number("lorenz.forcing", l.forcing);
        r.number("lorenz.dt", l.dt);
        r.number("lorenz.noise_sigma", l.noise_sigma);
        r.number("lorenz.init_sigma", l.init_sigma);
        r.count("lorenz.burn_in", l.burn_in);
        r.count("model.lags", c.arch.lags);
        r.count_list("model.hidden", c.arch.hidden);
        r.choice("model.activation", c.arch.activation, parse_activation);
        r.flag("model.output_bias", c.arch.output_bias);
        r.number("model.init_scale", c.arch.init_scale);
        r.choice("penalty.kind", c.penalty, parse_penalty_kind);
        r.number("penalty.lambda", c.lambda);
        r.count("penalty.grid_points", c.grid.points);
        r.number("penalty.grid_ratio", c.grid.ratio);
        r.number_list("penalty.lambdas", c.grid.explicit_lambdas);
        r.number("optimizer.initial_step", c.optimizer.initial_step);
        r.count("optimizer.max_iters", c.optimizer.max_iters);
        r.number("optimizer.rel_tol", c.optimizer.rel_tol);
        r.flag("optimizer.backtracking", c.optimizer.backtracking);
        r.number("optimizer.backtrack_factor", c.optimizer.backtrack_factor);
        r.number("optimizer.min_step", c.optimizer.min_step);
        r.u64_list("evaluation.seeds", c.seeds);
        r.flag("evaluation.include_diagonal", c.include_diagonal);
        r.flag("evaluation.standardize", c.standardize_data);
        r.u64("run.seed", c.seed);
        r.count("run.jobs", c.jobs);
        r.reject_unknown();
        validate(c);
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------- io

[[nodiscard]] inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream s;
    s << in.rdbuf();
    if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
    return s.str();
}

inline void write_file(const fs::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

[[nodiscard]] inline ExperimentConfig load_config(const fs::path& path) {
    return parse_config(read_file(path), path.string());
}

/// Header `t,s0,...,s{p-1}`, one row per time step.
[[nodiscard]] inline std::string dataset_csv(const TimeSeriesMatrix& ts) {
    std::string out = "t";
    for (std::size_t j = 0; j < ts.series(); ++j) out += ",s" + std::to_string(j);
    out += "\n";
    for (std::size_t t = 0; t < ts.length(); ++t) {
        out += std::to_string(t);
        for (double v : ts.values.row(t)) out += "," + format_double(v);
        out += "\n";
    }
    return out;
}

/// p x p matrix, no header.
[[nodiscard]] inline std::string matrix_csv(const Matrix& m) {
    std::string out;
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) out += (c ? "," : "") + format_double(m(r, c));
        out += "\n";
    }
    return out;
}

namespace detail {

inline std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!trim(line).empty()) out.push_back(line);
    }
    return out;
}

inline Vector parse_row(const std::string& line, const std::string& where) {
    Vector row;
    for (const auto& field : split(line, ',')) {
        double v = 0.0;
        if (!parse_double(field, v)) throw DataError(where + ": bad number '" + field + "'");
        row.push_back(v);
    }
    return row;
}

} // namespace detail

[[nodiscard]] inline TimeSeriesMatrix parse_dataset(const std::string& text,
                                                    const std::string& origin = "dataset") {
    const auto lines = detail::lines_of(text);
    if (lines.empty()) throw DataError(origin + ": empty file");
    const auto header = split(lines[0], ',');
    if (header.size() < 2 || header[0] != "t") {
        throw DataError(origin + ":1: header must be t,s0,...,s{p-1}");
    }
    const std::size_t p = header.size() - 1;
    for (std::size_t j = 0; j < p; ++j) {
        if (header[j + 1] != "s" + std::to_string(j)) {
            throw DataError(origin + ":1: expected column 's" + std::to_string(j) + "', found '" +
                            header[j + 1] + "'");
        }
    }
    Matrix values(lines.size() - 1, p);
    for (std::size_t n = 1; n < lines.size(); ++n) {
        const std::string where = origin + ":" + std::to_string(n + 1);
        const Vector row = detail::parse_row(lines[n], where);
        if (row.size() != p + 1) {
            throw DataError(where + ": expected " + std::to_string(p + 1) + " fields, found " +
                            std::to_string(row.size()));
        }
        std::copy(row.begin() + 1, row.end(), values.row(n - 1).begin());
    }
    if (values.rows() == 0) throw DataError(origin + ": no data rows");
    return TimeSeriesMatrix(std::move(values));
}

[[nodiscard]] inline Matrix parse_matrix_csv(const std::string& text,
                                             const std::string& origin = "matrix") {
    const auto lines = detail::lines_of(text);
    if (lines.empty()) throw DataError(origin + ": empty file");
    std::vector<Vector> rows;
    for (std::size_t n = 0; n < lines.size(); ++n) {
        rows.push_back(detail::parse_row(lines[n], origin + ":" + std::to_string(n + 1)));
        if (rows.back().size() != rows.front().size()) {
            throw DataError(origin + ":" + std::to_string(n + 1) + ": ragged row");
        }
    }
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    return m;
}

[[nodiscard]] inline GrangerGraph parse_truth(const std::string& text, const std::string& origin) {
    Matrix m = parse_matrix_csv(text, origin);
    if (m.rows() != m.cols()) throw DataError(origin + ": truth graph must be square");
    for (double v : m.data())
        if (v != 0.0 && v != 1.0) throw DataError(origin + ": truth entries must be 0 or 1");
    return GrangerGraph{std::move(m)};
}

// -------------------------------------------------------------- checkpoints

struct Checkpoint {
    ComponentMLP model;
    std::size_t series_index = 0;
    PenaltySpec penalty;
    std::uint64_t seed = 0;
    std::size_t iterations = 0;
    bool converged = false;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr int checkpoint_version = 1;

/// Versioned text; every double in C99 hex so reloads are bit-exact.
[[nodiscard]] inline std::string serialize_checkpoint(const Checkpoint& c) {
    const auto& a = c.model.arch;
    std::ostringstream o;
    o << "nngc-checkpoint " << checkpoint_version << "\n"
      << "series " << a.series << "\n"
      << "lags " << a.lags << "\n"
      << "hidden";
    for (std::size_t h : a.hidden) o << " " << h;
    o << "\n"
      << "activation " << to_string(a.activation) << "\n"
      << "output_bias " << (a.output_bias ? 1 : 0) << "\n"
      << "init_scale " << format_hex(a.init_scale) << "\n"
      << "series_index " << c.series_index << "\n"
      << "penalty " << to_string(c.penalty.kind) << " " << format_hex(c.penalty.lambda) << "\n"
      << "seed " << c.seed << "\n"
      << "iterations " << c.iterations << "\n"
      << "converged " << (c.converged ? 1 : 0) << "\n";
    std::size_t block = 0;
    c.model.for_each_block([&](std::span<const double> s) {
        o << "block " << block++ << " " << s.size() << "\n";
        for (std::size_t n = 0; n < s.size(); ++n) o << (n ? " " : "") << format_hex(s[n]);
        o << "\n";
    });
    o << "end\n";
    return o.str();
}

[[nodiscard]] inline Checkpoint parse_checkpoint(const std::string& text,
                                                 const std::string& origin = "checkpoint") {
    std::istringstream in(text);
    auto fail = [&](const std::string& what) -> DataError {
        return DataError(origin + ": " + what);
    };
    std::string line;
    auto next_line = [&](const std::string& key) {
        if (!std::getline(in, line)) throw fail("truncated before '" + key + "'");
        std::istringstream ls(line);
        std::string k;
        ls >> k;
        if (k != key) throw fail("expected '" + key + "', found '" + k + "'");
        std::string rest;
        std::getline(ls, rest);
        return trim(rest);
    };
    auto to_u64 = [&](const std::string& s, const std::string& key) {
        std::uint64_t u = 0;
        if (!parse_u64(s, u)) throw fail("bad value for '" + key + "'");
        return u;
    };
    auto to_double = [&](const std::string& s, const std::string& key) {
        double d = 0.0;
        if (!parse_double(s, d)) throw fail("bad value for '" + key + "'");
        return d;
    };

    const std::string version = next_line("nngc-checkpoint");
    if (version != std::to_string(checkpoint_version)) throw fail("unsupported version " + version);
    Architecture a;
    a.series = to_u64(next_line("series"), "series");
    a.lags = to_u64(next_line("lags"), "lags");
    a.hidden.clear();
    const std::string hidden = next_line("hidden");
    if (!hidden.empty())
        for (const auto& h : split(hidden, ' ')) a.hidden.push_back(to_u64(h, "hidden"));
    try {
        a.activation = parse_activation(next_line("activation"));
    } catch (const ConfigError& e) {
        throw fail(e.what());
    }
    a.output_bias = to_u64(next_line("output_bias"), "output_bias") != 0;
    a.init_scale = to_double(next_line("init_scale"), "init_scale");

    Checkpoint c;
    c.series_index = to_u64(next_line("series_index"), "series_index");
    const auto pen = split(next_line("penalty"), ' ');
    if (pen.size() != 2) throw fail("bad penalty line");
    try {
        c.penalty = PenaltySpec(parse_penalty_kind(pen[0]), to_double(pen[1], "penalty"));
        c.model = ComponentMLP(a);
    } catch (const ConfigError& e) {
        throw fail(e.what());
    }
    c.seed = to_u64(next_line("seed"), "seed");
    c.iterations = to_u64(next_line("iterations"), "iterations");
    c.converged = to_u64(next_line("converged"), "converged") != 0;

    std::size_t block = 0;
    c.model.for_each_block([&](std::span<double> s) {
        const auto head = split(next_line("block"), ' ');
        if (head.size() != 2 || to_u64(head[0], "block") != block || to_u64(head[1], "block") != s.size()) {
            throw fail("block " + std::to_string(block) + " header does not match the architecture");
        }
        if (!std::getline(in, line)) throw fail("truncated in block " + std::to_string(block));
        std::istringstream ls(line);
        std::string tok;
        for (double& v : s) {
            if (!(ls >> tok)) throw fail("short block " + std::to_string(block));
            v = to_double(tok, "block");
        }
        if (ls >> tok) throw fail("long block " + std::to_string(block));
        ++block;
    });
    (void)next_line("end");
    return c;
}

// ------------------------------------------------------------------ commands

struct Options {
    fs::path out_dir = "out";
    bool quiet = false;
};

namespace detail {

inline void note(const Options& o, const char* fmt, auto... args) {
    if (o.quiet) return;
    std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
}

inline std::string two_digits(std::size_t n) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%02zu", n);
    return buf;
}

inline RocPoint rate_point(const GrangerGraph& truth, const GrangerGraph& g, bool include_diagonal) {
    std::size_t tp = 0, fp = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        for (std::size_t j = 0; j < truth.size(); ++j) {
            if (!include_diagonal && i == j) continue;
            const bool real = truth(i, j) > 0.0;
            (real ? pos : neg) += 1;
            if (g(i, j) > 0.0) (real ? tp : fp) += 1;
        }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    return {neg ? static_cast<double>(fp) / static_cast<double>(neg) : nan,
            pos ? static_cast<double>(tp) / static_cast<double>(pos) : nan};
}

inline TimeSeriesMatrix prepare(const ExperimentConfig& cfg, const TimeSeriesMatrix& raw) {
    return cfg.standardize_data ? standardize(raw).first : raw;
}

} // namespace detail

/// Writes data.csv and truth.csv for the configured generator and seed.
inline void cmd_simulate(const ExperimentConfig& cfg, const Options& opt) {
    validate(cfg);
    const GeneratedData data = generate(cfg.generator, cfg.seed);
    write_file(opt.out_dir / "data.csv", dataset_csv(data.series));
    write_file(opt.out_dir / "truth.csv", matrix_csv(data.truth.weights));
    detail::note(opt, "simulate: %s p=%zu T=%zu seed=%" PRIu64 " -> %s",
                 std::string(to_string(cfg.generator.kind)).c_str(), data.series.series(),
                 data.series.length(), cfg.seed, opt.out_dir.string().c_str());
}

/// Fits every series at penalty.lambda. Writes graph.csv, one lag profile and
/// one checkpoint per series. Series whose optimizer fails are reported
/// together after the rest are written.
inline void cmd_fit(const ExperimentConfig& cfg, const fs::path& dataset, const Options& opt) {
    validate(cfg);
    const TimeSeriesMatrix ts =
        detail::prepare(cfg, parse_dataset(read_file(dataset), dataset.string()));
    const std::size_t p = ts.series();
    Architecture arch = cfg.arch;
    arch.series = p;
    const PenaltySpec spec(cfg.penalty, cfg.lambda);

    std::vector<FitResult> results(p);
    std::vector<std::string> errors(p);
    std::vector<char> failed(p, 0);
    parallel_for(p, cfg.jobs, [&](std::size_t i) {
        try {
            results[i] = fit(build_lagged(ts, arch.lags, i), spec, arch, cfg.optimizer,
                             series_seed(cfg.seed, i));
        } catch (const OptimizationError& e) {
            failed[i] = 1;
            errors[i] = e.what();
        }
    });

    std::vector<ComponentMLP> models;
    for (std::size_t i = 0; i < p; ++i) {
        models.push_back(failed[i] ? ComponentMLP(arch) : results[i].model);
        if (failed[i]) continue;
        write_file(opt.out_dir / ("lag_profile_" + detail::two_digits(i) + ".csv"),
                   matrix_csv(lag_profile(results[i].model)));
        Checkpoint ck{results[i].model, i, spec, series_seed(cfg.seed, i),
                      results[i].iterations_run, results[i].converged};
        write_file(opt.out_dir / ("model_" + detail::two_digits(i) + ".ckpt"), serialize_checkpoint(ck));
        const Vector w = granger_weights(results[i].model);
        detail::note(opt, "fit: series %zu  iterations %zu  converged %d  inputs %zu", i,
                     results[i].iterations_run, results[i].converged ? 1 : 0,
                     static_cast<std::size_t>(std::count_if(w.begin(), w.end(), [](double v) { return v > 0.0; })));
    }
    write_file(opt.out_dir / "graph.csv", matrix_csv(assemble_graph(models).weights));

    std::string msg;
    for (std::size_t i = 0; i < p; ++i)
        if (failed[i]) msg += "\n  series " + std::to_string(i) + ": " + errors[i];
    if (!msg.empty()) throw OptimizationError("fit failed for some series:" + msg);
}

/// Column names of summary.csv and report.csv.
inline constexpr std::string_view summary_header =
    "generator,length,seed,penalty,auc,auc_offdiag";

/// Runs the lambda grid with warm starts and scores it against the truth.
inline void cmd_sweep(const ExperimentConfig& cfg, const fs::path& dataset, const fs::path& truth_path,
                      const Options& opt) {
    validate(cfg);
    const TimeSeriesMatrix raw = parse_dataset(read_file(dataset), dataset.string());
    const GrangerGraph truth = parse_truth(read_file(truth_path), truth_path.string());
    if (truth.size() != raw.series()) {
        throw DataError("truth graph is " + std::to_string(truth.size()) + "x" +
                        std::to_string(truth.size()) + " but the dataset has " +
                        std::to_string(raw.series()) + " series");
    }
    (void)roc_points(truth, {}, cfg.include_diagonal); // degenerate truth fails before any fitting
    const TimeSeriesMatrix ts = detail::prepare(cfg, raw);

    SweepConfig sc;
    sc.arch = cfg.arch;
    sc.penalty = cfg.penalty;
    sc.optimizer = cfg.optimizer;
    sc.lambdas = make_grid(ts, cfg.arch.lags, cfg.grid);
    sc.seed = cfg.seed;
    sc.jobs = cfg.jobs;
    const SweepResult r = run_sweep(ts, sc);

    // Per-lambda table, with and without the diagonal. Rates are nan when
    // the truth has no negatives or no positives in that view.
    std::string table = "index,lambda,edges,edges_offdiag,lag_pairs,fpr,tpr,fpr_offdiag,tpr_offdiag,iterations,converged\n";
    for (std::size_t n = 0; n < r.lambdas.size(); ++n) {
        const GrangerGraph& g = r.graphs[n];
        write_file(opt.out_dir / "graphs" / ("graph_" + detail::two_digits(n) + ".csv"), matrix_csv(g.weights));
        const RocPoint with = detail::rate_point(truth, g, true);
        const RocPoint without = detail::rate_point(truth, g, false);
        std::size_t iters = 0, conv = 0;
        for (std::size_t i = 0; i < r.iterations[n].size(); ++i) {
            iters += r.iterations[n][i];
            conv += r.converged[n][i] ? 1 : 0;
        }
        table += std::to_string(n) + "," + format_double(r.lambdas[n]) + "," +
                 std::to_string(count_edges(g, true)) + "," + std::to_string(count_edges(g, false)) +
                 "," + std::to_string(r.selected_lag_pairs(n)) + "," + format_double(with.fpr) + "," +
                 format_double(with.tpr) + "," + format_double(without.fpr) + "," +
                 format_double(without.tpr) + "," + std::to_string(iters) + "," +
                 std::to_string(conv) + "\n";
        detail::note(opt, "sweep: lambda %2zu/%zu  %-12.6g edges %3zu  iterations %zu", n + 1,
                     r.lambdas.size(), r.lambdas[n], count_edges(g, true), iters);
    }
    write_file(opt.out_dir / "path.csv", table);

    std::string curve = "fpr,tpr\n";
    for (const auto& pt : roc_points(truth, r.graphs, cfg.include_diagonal))
        curve += format_double(pt.fpr) + "," + format_double(pt.tpr) + "\n";
    write_file(opt.out_dir / "roc.csv", curve);

    // Lag profiles per lambda, one block of p*p rows: output series, input series, K norms.
    std::string lags = "index,series,input";
    for (std::size_t k = 0; k < cfg.arch.lags; ++k) lags += ",lag" + std::to_string(k + 1);
    lags += "\n";
    for (std::size_t n = 0; n < r.lambdas.size(); ++n) {
        for (std::size_t i = 0; i < r.lag_profiles[n].size(); ++i) {
            const Matrix& prof = r.lag_profiles[n][i];
            for (std::size_t j = 0; j < prof.rows(); ++j) {
                lags += std::to_string(n) + "," + std::to_string(i) + "," + std::to_string(j);
                for (double v : prof.row(j)) lags += "," + format_double(v);
                lags += "\n";
            }
        }
    }
    write_file(opt.out_dir / "lag_profiles.csv", lags);

    const double a = auc(roc_points(truth, r.graphs, true));
    // Off-diagonal AUC is undefined when the truth has no off-diagonal edge.
    double a_off = -1.0;
    try {
        a_off = auc(roc_points(truth, r.graphs, false));
    } catch (const DataError&) {
    }
    std::string summary(summary_header);
    summary += "\n" + std::string(to_string(cfg.generator.kind)) + "," + std::to_string(raw.length()) +
               "," + std::to_string(cfg.seed) + "," + std::string(to_string(cfg.penalty)) + "," +
               format_double(a) + "," + (a_off < 0 ? std::string("nan") : format_double(a_off)) + "\n";
    write_file(opt.out_dir / "summary.csv", summary);
    detail::note(opt, "sweep: AUC %.4f (off-diagonal %.4f)", a, a_off);
}

/// Concatenates the summary rows of several sweep directories into
/// report.csv. Unreadable inputs are listed; the good rows are still written.
inline void cmd_report(const std::vector<fs::path>& inputs, const Options& opt) {
    if (inputs.empty()) throw ConfigError("report: no input directories given");
    std::string rows;
    std::string problems;
    std::size_t good = 0;
    for (const auto& dir : inputs) {
        const fs::path path = dir / "summary.csv";
        try {
            const auto lines = detail::lines_of(read_file(path));
            if (lines.empty() || lines[0] != summary_header) throw DataError("bad header");
            if (lines.size() != 2) throw DataError("expected exactly one data row");
            const auto fields = split(lines[1], ',');
            if (fields.size() != 6) throw DataError("expected 6 fields");
            rows += lines[1] + "\n";
            ++good;
        } catch (const std::exception& e) {
            problems += "\n  " + path.string() + ": " + e.what();
        }
    }
    if (good == 0) throw DataError("report: no usable inputs:" + problems);
    write_file(opt.out_dir / "report.csv", std::string(summary_header) + "\n" + rows);
    detail::note(opt, "report: %zu rows -> %s", good, (opt.out_dir / "report.csv").string().c_str());
    if (!problems.empty()) throw DataError("report: some inputs were skipped:" + problems);
}

/// Maps an exception from a command onto the documented exit codes.
[[nodiscard]] inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return exit_config;
    if (dynamic_cast<const DataError*>(&e)) return exit_data;
    if (dynamic_cast<const OptimizationError*>(&e)) return exit_optimization;
    if (dynamic_cast<const IoError*>(&e)) return exit_io;
    return exit_usage;
}

} // namespace nngc::cli
