#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cmlp.hpp"
#include "errors.hpp"

namespace nngc {

enum class PenaltyKind { none, group, hierarchical };

[[nodiscard]] inline std::string_view to_string(PenaltyKind k) noexcept {
    switch (k) {
    case PenaltyKind::none: return "none";
    case PenaltyKind::group: return "group";
    case PenaltyKind::hierarchical: return "hierarchical";
    }
    return "none";
}

[[nodiscard]] inline PenaltyKind parse_penalty_kind(std::string_view name) {
    if (name == "none") return PenaltyKind::none;
    if (name == "group") return PenaltyKind::group;
    if (name == "hierarchical") return PenaltyKind::hierarchical;
    throw ConfigError("unknown penalty kind '" + std::string(name) +
                      "' (expected none, group or hierarchical)");
}

struct PenaltySpec {
    PenaltyKind kind = PenaltyKind::group;
    double lambda = 0.0;

    PenaltySpec() = default;
    PenaltySpec(PenaltyKind k, double l) : kind(k), lambda(l) {
        if (!(lambda >= 0.0)) throw ConfigError("penalty lambda must be >= 0");
    }

    friend bool operator==(const PenaltySpec&, const PenaltySpec&) = default;
};

/// Lag blocks of one first-layer input column: blocks[k] = W^{1,k+1}_{:j}.
struct ColumnGroupView {
    std::vector<Vector> blocks;

    [[nodiscard]] std::size_t lags() const noexcept { return blocks.size(); }

    friend bool operator==(const ColumnGroupView&, const ColumnGroupView&) = default;
};

[[nodiscard]] inline ColumnGroupView column_group(const ComponentMLP& m, std::size_t j) {
    ColumnGroupView v;
    v.blocks.reserve(m.lags());
    for (const auto& w : m.first_layer) v.blocks.push_back(w.column(j));
    return v;
}

inline void store_column_group(ComponentMLP& m, std::size_t j, const ColumnGroupView& v) {
    for (std::size_t k = 0; k < m.lags(); ++k)
        for (std::size_t h = 0; h < m.first_layer[k].rows(); ++h) m.first_layer[k](h, j) = v.blocks[k][h];
}

namespace detail {

// Squared norm of lag blocks [from, K).
inline double suffix_sq_norm(const ColumnGroupView& v, std::size_t from) {
    double s = 0.0;
    for (std::size_t k = from; k < v.lags(); ++k)
        for (double x : v.blocks[k]) s += x * x;
    return s;
}

} // namespace detail

[[nodiscard]] inline double penalty_value(const PenaltySpec& spec, const ComponentMLP& m) {
    if (spec.kind == PenaltyKind::none || spec.lambda == 0.0) return 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < m.series(); ++j) {
        const ColumnGroupView col = column_group(m, j);
        if (spec.kind == PenaltyKind::group) {
            total += std::sqrt(detail::suffix_sq_norm(col, 0));
        } else {
            for (std::size_t k = 0; k < col.lags(); ++k)
                total += std::sqrt(detail::suffix_sq_norm(col, k));
        }
    }
    return spec.lambda * total;
}

/// Block soft-thresholding: zero when ||block|| <= threshold, otherwise
/// scaled by (1 - threshold / ||block||).
inline void prox_group_block_inplace(std::span<double> block, double threshold) {
    if (!(threshold >= 0.0)) throw std::invalid_argument("prox threshold must be >= 0");
    if (threshold == 0.0) return;
    const double norm = norm2(block);
    if (norm <= threshold) {
        for (double& v : block) v = 0.0;
        return;
    }
    const double scale = 1.0 - threshold / norm;
    for (double& v : block) v *= scale;
}

[[nodiscard]] inline Vector prox_group_block(Vector block, double threshold) {
    prox_group_block_inplace(block, threshold);
    return block;
}

/// Nested-group prox for the suffix groups (k..K) of one column, applied
/// deepest suffix first. For nested groups this composition is the exact
/// prox of the summed suffix norms, and it leaves a suffix of zero blocks.
[[nodiscard]] inline ColumnGroupView prox_hierarchical_column(ColumnGroupView col,
                                                              double threshold) {
    if (!(threshold >= 0.0)) throw std::invalid_argument("prox threshold must be >= 0");
    if (threshold == 0.0) return col;
    for (std::size_t from = col.lags(); from-- > 0;) {
        const double norm = std::sqrt(detail::suffix_sq_norm(col, from));
        if (norm <= threshold) {
            for (std::size_t k = from; k < col.lags(); ++k)
                for (double& v : col.blocks[k]) v = 0.0;
        } else {
            const double scale = 1.0 - threshold / norm;
            for (std::size_t k = from; k < col.lags(); ++k)
                for (double& v : col.blocks[k]) v *= scale;
        }
    }
    return col;
}

/// Proximal map of step * penalty on the first layer. Everything else in the
/// model is left alone.
inline void apply_prox(const PenaltySpec& spec, ComponentMLP& m, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("apply_prox: step must be > 0");
    if (spec.kind == PenaltyKind::none || spec.lambda == 0.0) return;
    const double threshold = step * spec.lambda;
    for (std::size_t j = 0; j < m.series(); ++j) {
        ColumnGroupView col = column_group(m, j);
        if (spec.kind == PenaltyKind::group) {
            Vector stacked;
            for (const auto& b : col.blocks) stacked.insert(stacked.end(), b.begin(), b.end());
            prox_group_block_inplace(stacked, threshold);
            std::size_t pos = 0;
            for (auto& b : col.blocks)
                for (double& v : b) v = stacked[pos++];
        } else {
            col = prox_hierarchical_column(std::move(col), threshold);
        }
        store_column_group(m, j, col);
    }
}

/// Per-(j, k) lag-block norms ||W^{1k}_{:j}||, as a p x K matrix.
[[nodiscard]] inline Matrix lag_profile(const ComponentMLP& m) {
    Matrix out(m.series(), m.lags());
    for (std::size_t k = 0; k < m.lags(); ++k) {
        const Matrix& w = m.first_layer[k];
        for (std::size_t j = 0; j < m.series(); ++j) {
            double s = 0.0;
            for (std::size_t h = 0; h < w.rows(); ++h) s += w(h, j) * w(h, j);
            out(j, k) = std::sqrt(s);
        }
    }
    return out;
}

/// True when, for every column, the zero lag blocks form a suffix {k*+1..K}.
[[nodiscard]] inline bool has_suffix_sparsity(const ComponentMLP& m) {
    const Matrix prof = lag_profile(m);
    for (std::size_t j = 0; j < prof.rows(); ++j) {
        bool seen_zero = false;
        for (std::size_t k = 0; k < prof.cols(); ++k) {
            if (prof(j, k) == 0.0) {
                seen_zero = true;
            } else if (seen_zero) {
                return false;
            }
        }
    }
    return true;
}

} // namespace nngc
