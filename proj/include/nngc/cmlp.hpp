#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "core_math.hpp"
#include "errors.hpp"
#include "timeseries.hpp"

namespace nngc {

enum class Activation { tanh, relu };

[[nodiscard]] inline std::string_view to_string(Activation a) noexcept {
    return a == Activation::tanh ? "tanh" : "relu";
}

[[nodiscard]] inline Activation parse_activation(std::string_view name) {
    if (name == "tanh") return Activation::tanh;
    if (name == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + std::string(name) + "' (expected tanh or relu)");
}

/// Shape of one component network. An empty `hidden` list is the linear model.
struct Architecture {
    std::size_t series = 0;        // p
    std::size_t lags = 1;          // K
    std::vector<std::size_t> hidden{10};
    Activation activation = Activation::tanh;
    bool output_bias = true;
    double init_scale = 1.0;

    [[nodiscard]] bool linear() const noexcept { return hidden.empty(); }
    [[nodiscard]] std::size_t first_width() const noexcept { return linear() ? 1 : hidden.front(); }
    [[nodiscard]] std::size_t input_size() const noexcept { return series * lags; }

    /// Same parameter shapes; init_scale does not count.
    [[nodiscard]] bool same_shape(const Architecture& o) const noexcept {
        return series == o.series && lags == o.lags && hidden == o.hidden &&
               activation == o.activation && output_bias == o.output_bias;
    }

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Network g_i for one output series.
///
/// first_layer[k] is the H1 x p matrix applied to x_{t-k-1}; column j across
/// all k is the group that decides whether series j feeds this output.
/// deeper[l] maps hidden width l to width l+1; biases[l] belongs to hidden
/// layer l. The linear model has one 1 x p matrix per lag and only the output
/// bias beyond that.
///
/// The same struct doubles as the gradient container.
struct ComponentMLP {
    Architecture arch;
    std::vector<Matrix> first_layer;
    std::vector<Matrix> deeper;
    std::vector<Vector> biases;
    Vector output_weights;
    double output_bias = 0.0;

    ComponentMLP() = default;

    explicit ComponentMLP(Architecture a) : arch(std::move(a)) {
        if (arch.series == 0) throw ConfigError("model: series count must be >= 1");
        if (arch.lags == 0) throw ConfigError("model: lag order must be >= 1");
        for (std::size_t h : arch.hidden)
            if (h == 0) throw ConfigError("model: hidden widths must be >= 1");
        first_layer.assign(arch.lags, Matrix(arch.first_width(), arch.series));
        for (std::size_t l = 1; l < arch.hidden.size(); ++l)
            deeper.emplace_back(arch.hidden[l], arch.hidden[l - 1]);
        for (std::size_t h : arch.hidden) biases.emplace_back(h, 0.0);
        if (!arch.linear()) output_weights.assign(arch.hidden.back(), 0.0);
    }

    [[nodiscard]] std::size_t series() const noexcept { return arch.series; }
    [[nodiscard]] std::size_t lags() const noexcept { return arch.lags; }

    /// Visits every parameter block in a fixed order: first layer by lag,
    /// deeper weights, biases, output weights, output bias.
    template <class Fn>
    void for_each_block(Fn&& fn) {
        for (auto& m : first_layer) fn(m.data());
        for (auto& m : deeper) fn(m.data());
        for (auto& b : biases) fn(std::span<double>(b));
        fn(std::span<double>(output_weights));
        fn(std::span<double>(&output_bias, 1));
    }
    template <class Fn>
    void for_each_block(Fn&& fn) const {
        for (const auto& m : first_layer) fn(m.data());
        for (const auto& m : deeper) fn(m.data());
        for (const auto& b : biases) fn(std::span<const double>(b));
        fn(std::span<const double>(output_weights));
        fn(std::span<const double>(&output_bias, 1));
    }

    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each_block([&](auto s) { n += s.size(); });
        return n;
    }

    friend bool operator==(const ComponentMLP&, const ComponentMLP&) = default;
};

using ModelGradient = ComponentMLP;

[[nodiscard]] inline Vector flatten(const ComponentMLP& m) {
    Vector out;
    out.reserve(m.parameter_count());
    m.for_each_block([&](auto s) { out.insert(out.end(), s.begin(), s.end()); });
    return out;
}

inline void unflatten(ComponentMLP& m, std::span<const double> flat) {
    if (flat.size() != m.parameter_count()) throw std::invalid_argument("unflatten: length mismatch");
    std::size_t pos = 0;
    m.for_each_block([&](std::span<double> s) {
        std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), s.size(), s.begin());
        pos += s.size();
    });
}

/// Seeded initialisation: weights ~ Normal(0, init_scale^2) / sqrt(fan_in),
/// all biases zero.
[[nodiscard]] inline ComponentMLP init_model(const Architecture& arch, SeededRng& rng) {
    ComponentMLP m(arch);
    const double first_scale = arch.init_scale / std::sqrt(static_cast<double>(arch.input_size()));
    for (auto& w : m.first_layer)
        for (double& v : w.data()) v = first_scale * rng.normal();
    for (auto& w : m.deeper) {
        const double s = arch.init_scale / std::sqrt(static_cast<double>(w.cols()));
        for (double& v : w.data()) v = s * rng.normal();
    }
    if (!arch.linear()) {
        const double s = arch.init_scale / std::sqrt(static_cast<double>(arch.hidden.back()));
        for (double& v : m.output_weights) v = s * rng.normal();
    }
    return m;
}

/// Lagged design for one output series. Row n holds x_{t-1}, ..., x_{t-K}
/// (lag-1 block first) for t = K + n; the target is x_{t,i}.
struct LaggedDataset {
    Matrix inputs;
    Vector targets;
    std::size_t series_index = 0;
    std::size_t series = 0;
    std::size_t lags = 0;

    [[nodiscard]] std::size_t rows() const noexcept { return targets.size(); }
};

[[nodiscard]] inline LaggedDataset build_lagged(const TimeSeriesMatrix& ts, std::size_t lags,
                                                std::size_t series_index) {
    const std::size_t T = ts.length();
    const std::size_t p = ts.series();
    if (lags == 0) throw std::invalid_argument("build_lagged: lag order must be >= 1");
    if (T <= lags) {
        throw DataError("build_lagged: need T > K (T=" + std::to_string(T) +
                        ", K=" + std::to_string(lags) + ")");
    }
    if (series_index >= p) throw std::invalid_argument("build_lagged: series index out of range");
    const std::size_t n_rows = T - lags;
    LaggedDataset d{Matrix(n_rows, p * lags), Vector(n_rows), series_index, p, lags};
    for (std::size_t n = 0; n < n_rows; ++n) {
        const std::size_t t = lags + n;
        auto row = d.inputs.row(n);
        for (std::size_t k = 0; k < lags; ++k) {
            const auto src = ts.values.row(t - 1 - k);
            std::copy(src.begin(), src.end(), row.begin() + static_cast<std::ptrdiff_t>(k * p));
        }
        d.targets[n] = ts.values(t, series_index);
    }
    return d;
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;

inline RowMatrix activate(Activation a, const RowMatrix& z) {
    if (a == Activation::tanh) return z.unaryExpr([](double v) { return std::tanh(v); });
    return z.cwiseMax(0.0);
}

// sigma'(z) written through z and h = sigma(z). ReLU takes 0 at exactly z = 0.
inline RowMatrix activate_deriv(Activation a, const RowMatrix& z, const RowMatrix& h) {
    if (a == Activation::tanh) return (1.0 - h.array().square()).matrix();
    return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

// First layer as one H1 x pK matrix; column k*p + j holds W^{1,k+1}_{:j}.
inline RowMatrix stacked_first_layer(const ComponentMLP& m) {
    const std::size_t p = m.series();
    RowMatrix w(static_cast<Eigen::Index>(m.arch.first_width()),
                static_cast<Eigen::Index>(m.arch.input_size()));
    for (std::size_t k = 0; k < m.lags(); ++k) {
        const Matrix& wk = m.first_layer[k];
        for (std::size_t h = 0; h < wk.rows(); ++h)
            for (std::size_t j = 0; j < p; ++j)
                w(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(k * p + j)) = wk(h, j);
    }
    return w;
}

inline Eigen::Map<const Eigen::VectorXd> as_eigen(std::span<const double> v) {
    return {v.data(), static_cast<Eigen::Index>(v.size())};
}

// Forward pass over every row of x, keeping the layer values for backprop.
struct BatchPass {
    std::vector<RowMatrix> pre;  // per hidden layer, N x H_l
    std::vector<RowMatrix> post; // per hidden layer, N x H_l
    Eigen::VectorXd output;      // N

    BatchPass(const ComponentMLP& m, const ConstRowMap& x) {
        const RowMatrix w1 = stacked_first_layer(m);
        if (m.arch.linear()) {
            output = x * w1.row(0).transpose();
            if (m.arch.output_bias) output.array() += m.output_bias;
            return;
        }
        const Activation act = m.arch.activation;
        RowMatrix z = x * w1.transpose();
        z.rowwise() += as_eigen(m.biases[0]).transpose();
        post.push_back(activate(act, z));
        pre.push_back(std::move(z));
        for (std::size_t l = 1; l < m.arch.hidden.size(); ++l) {
            const Matrix& wl = m.deeper[l - 1];
            const ConstRowMap wmap(wl.data().data(), static_cast<Eigen::Index>(wl.rows()),
                                   static_cast<Eigen::Index>(wl.cols()));
            RowMatrix zl = post.back() * wmap.transpose();
            zl.rowwise() += as_eigen(m.biases[l]).transpose();
            post.push_back(activate(act, zl));
            pre.push_back(std::move(zl));
        }
        output = post.back() * as_eigen(m.output_weights);
        if (m.arch.output_bias) output.array() += m.output_bias;
    }
};

inline ConstRowMap design_map(const Matrix& inputs) {
    return {inputs.data().data(), static_cast<Eigen::Index>(inputs.rows()),
            static_cast<Eigen::Index>(inputs.cols())};
}

} // namespace detail

inline void check_compatible(const ComponentMLP& m, const LaggedDataset& d) {
    if (d.inputs.cols() != m.arch.input_size() || d.series != m.series() || d.lags != m.lags()) {
        throw std::invalid_argument("dataset shape (p=" + std::to_string(d.series) +
                                    ", K=" + std::to_string(d.lags) +
                                    ") does not match model (p=" + std::to_string(m.series()) +
                                    ", K=" + std::to_string(m.lags()) + ")");
    }
}

/// Prediction for one lagged input (x_{t-1}, ..., x_{t-K}).
[[nodiscard]] inline double forward(const ComponentMLP& m, std::span<const double> lagged_input) {
    if (lagged_input.size() != m.arch.input_size()) {
        throw std::invalid_argument("model expects " + std::to_string(m.arch.input_size()) +
                                    " lagged inputs, got " + std::to_string(lagged_input.size()));
    }
    const detail::ConstRowMap x(lagged_input.data(), 1,
                                static_cast<Eigen::Index>(lagged_input.size()));
    return detail::BatchPass(m, x).output(0);
}

/// Plain sum of squared residuals over all rows.
[[nodiscard]] inline double loss(const ComponentMLP& m, const LaggedDataset& d) {
    check_compatible(m, d);
    const detail::BatchPass pass(m, detail::design_map(d.inputs));
    return (pass.output - detail::as_eigen(d.targets)).squaredNorm();
}

[[nodiscard]] inline ModelGradient zeros_like(const ComponentMLP& m) { return ComponentMLP(m.arch); }

/// Exact gradient of `loss` by reverse-mode accumulation over all rows.
/// Writes the loss into *loss_out when given.
[[nodiscard]] inline ModelGradient grad(const ComponentMLP& m, const LaggedDataset& d,
                                        double* loss_out = nullptr) {
    using detail::RowMatrix;
    check_compatible(m, d);
    const auto x = detail::design_map(d.inputs);
    const detail::BatchPass pass(m, x);
    const Eigen::VectorXd resid = pass.output - detail::as_eigen(d.targets);
    if (loss_out) *loss_out = resid.squaredNorm();
    const Eigen::VectorXd dout = 2.0 * resid;

    ModelGradient g = zeros_like(m);
    if (m.arch.output_bias) g.output_bias = dout.sum();

    RowMatrix g_first; // H1 x pK
    if (m.arch.linear()) {
        g_first = (x.transpose() * dout).transpose();
    } else {
        const Activation act = m.arch.activation;
        const std::size_t depth = m.arch.hidden.size();
        Eigen::Map<Eigen::VectorXd>(g.output_weights.data(),
                                    static_cast<Eigen::Index>(g.output_weights.size())) =
            pass.post.back().transpose() * dout;
        RowMatrix delta = (dout * detail::as_eigen(m.output_weights).transpose()).cwiseProduct(
            detail::activate_deriv(act, pass.pre.back(), pass.post.back()));
        for (std::size_t l = depth - 1; l >= 1; --l) {
            const Matrix& wl = m.deeper[l - 1];
            Matrix& gl = g.deeper[l - 1];
            Eigen::Map<RowMatrix>(gl.data().data(), static_cast<Eigen::Index>(gl.rows()),
                                  static_cast<Eigen::Index>(gl.cols())) =
                delta.transpose() * pass.post[l - 1];
            Eigen::Map<Eigen::VectorXd>(g.biases[l].data(),
                                        static_cast<Eigen::Index>(g.biases[l].size())) =
                delta.colwise().sum().transpose();
            const detail::ConstRowMap wmap(wl.data().data(), static_cast<Eigen::Index>(wl.rows()),
                                           static_cast<Eigen::Index>(wl.cols()));
            delta = (delta * wmap).cwiseProduct(
                detail::activate_deriv(act, pass.pre[l - 1], pass.post[l - 1]));
        }
        Eigen::Map<Eigen::VectorXd>(g.biases[0].data(),
                                    static_cast<Eigen::Index>(g.biases[0].size())) =
            delta.colwise().sum().transpose();
        g_first = delta.transpose() * x;
    }
    const std::size_t p = m.series();
    for (std::size_t k = 0; k < m.lags(); ++k) {
        Matrix& gk = g.first_layer[k];
        for (std::size_t h = 0; h < gk.rows(); ++h)
            for (std::size_t j = 0; j < p; ++j)
                gk(h, j) = g_first(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(k * p + j));
    }
    return g;
}

/// Norm of the stacked lag blocks of input column j: ||(W^{11}_{:j}, ..., W^{1K}_{:j})||.
[[nodiscard]] inline Vector granger_weights(const ComponentMLP& m) {
    Vector out(m.series(), 0.0);
    for (const auto& w : m.first_layer)
        for (std::size_t h = 0; h < w.rows(); ++h)
            for (std::size_t j = 0; j < w.cols(); ++j) out[j] += w(h, j) * w(h, j);
    for (double& v : out) v = std::sqrt(v);
    return out;
}

} // namespace nngc
