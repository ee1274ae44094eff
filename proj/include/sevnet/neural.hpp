#pragma once

// Dense feed-forward networks: forward/backward passes with inverted dropout,
// L2 weight decay, MSE and class-weighted cross-entropy objectives, an Adam
// optimizer and a finite-difference gradient checker. All arithmetic is double.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "preprocess.hpp"
#include "random.hpp"

namespace sevnet {

enum class Activation { Relu, Linear, Softmax };

inline std::string_view to_string(Activation a) {
    switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Linear: return "linear";
    case Activation::Softmax: return "softmax";
    }
    return "unknown";
}

inline Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::Relu;
    if (s == "linear") return Activation::Linear;
    if (s == "softmax") return Activation::Softmax;
    throw config_error("InvalidSpec", "unknown activation '" + std::string{s} + "'");
}

struct Dense {
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    Activation activation = Activation::Relu;
};

struct Dropout {
    double rate = 0.0;
};

using LayerSpec = std::variant<Dense, Dropout>;

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    double l2_penalty = 0.0;

    void validate() const {
        std::optional<std::size_t> width;
        std::size_t dense = 0;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (const auto* d = std::get_if<Dense>(&layers[i])) {
                if (d->fan_in == 0 || d->fan_out == 0) throw config_error("InvalidSpec", "dense layer with zero width");
                if (width && *width != d->fan_in)
                    throw config_error("InvalidSpec", "layer " + std::to_string(i) + " fan_in does not chain");
                if (d->activation == Activation::Softmax && i + 1 != layers.size())
                    throw config_error("InvalidSpec", "softmax is only allowed on the final layer");
                width = d->fan_out;
                ++dense;
            } else {
                const double r = std::get<Dropout>(layers[i]).rate;
                if (!(r >= 0.0 && r < 1.0)) throw config_error("InvalidSpec", "dropout rate must lie in [0,1)");
            }
        }
        if (dense == 0) throw config_error("InvalidSpec", "network needs at least one dense layer");
        if (!(l2_penalty >= 0.0)) throw config_error("InvalidSpec", "l2 penalty must be >= 0");
    }

    [[nodiscard]] std::vector<Dense> dense_layers() const {
        std::vector<Dense> out;
        for (const auto& l : layers)
            if (const auto* d = std::get_if<Dense>(&l)) out.push_back(*d);
        return out;
    }

    [[nodiscard]] std::size_t input_width() const { return dense_layers().front().fan_in; }
    [[nodiscard]] std::size_t output_width() const { return dense_layers().back().fan_out; }
};

struct DenseParams {
    Matrix weights;  // fan_in x fan_out
    RowVector bias;  // fan_out
};

/// Trainable weights, one entry per Dense layer in network order. The same
/// shape doubles as the container for gradients and optimizer moments.
struct Parameters {
    std::vector<DenseParams> layers;

    [[nodiscard]] std::size_t count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
        return n;
    }

    [[nodiscard]] bool all_finite() const {
        return std::all_of(layers.begin(), layers.end(),
                           [](const auto& l) { return l.weights.allFinite() && l.bias.allFinite(); });
    }

    static Parameters zeros_like(const Parameters& p) {
        Parameters z;
        for (const auto& l : p.layers)
            z.layers.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()), RowVector::Zero(l.bias.size())});
        return z;
    }

    bool operator==(const Parameters& o) const {
        if (layers.size() != o.layers.size()) return false;
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (layers[i].weights != o.layers[i].weights || layers[i].bias != o.layers[i].bias) return false;
        return true;
    }
};

/// He-uniform weights for layers with relu activation, Glorot-uniform
/// otherwise; zero biases.
inline Parameters init_params(const NetworkSpec& spec, std::uint64_t seed) {
    spec.validate();
    Parameters p;
    std::uint64_t index = 0;
    for (const auto& d : spec.dense_layers()) {
        const auto fan_in = static_cast<double>(d.fan_in);
        const auto fan_out = static_cast<double>(d.fan_out);
        const double limit =
            d.activation == Activation::Relu ? std::sqrt(6.0 / fan_in) : std::sqrt(6.0 / (fan_in + fan_out));
        Rng rng(derive_seed(seed, "init", index++));
        DenseParams layer{Matrix(static_cast<Eigen::Index>(d.fan_in), static_cast<Eigen::Index>(d.fan_out)),
                          RowVector::Zero(static_cast<Eigen::Index>(d.fan_out))};
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = rng.uniform(-limit, limit);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

enum class Mode { Train, Infer };

/// Per-layer state retained by a training-mode forward pass.
struct ForwardCache {
    Matrix input;                 // the batch
    std::vector<Matrix> outputs;  // output of each layer (post-activation)
    std::vector<Matrix> masks;    // dropout: scaled keep mask; empty for dense or rate 0
    bool train = false;

    /// Input seen by layer i.
    [[nodiscard]] const Matrix& input_of(std::size_t i) const { return i == 0 ? input : outputs[i - 1]; }
};

struct ForwardResult {
    Matrix output;
    ForwardCache cache;
};

inline void softmax_rows(Matrix& z) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        auto row = z.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
    }
}

namespace detail {

inline void apply_activation(Matrix& z, Activation a) {
    switch (a) {
    case Activation::Relu: z = z.cwiseMax(0.0); break;
    case Activation::Linear: break;
    case Activation::Softmax: softmax_rows(z); break;
    }
}

inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::uint64_t seed) {
    Rng rng(seed);
    const double keep = 1.0 - rate;
    const double scale = 1.0 / keep;
    Matrix mask(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) mask(r, c) = rng.bernoulli(keep) ? scale : 0.0;
    return mask;
}

inline void check_input(const NetworkSpec& spec, const Matrix& x) {
    if (static_cast<std::size_t>(x.cols()) != spec.input_width())
        throw data_error("ShapeMismatch", "batch width " + std::to_string(x.cols()) + " does not match network input " +
                                              std::to_string(spec.input_width()));
}

} // namespace detail

/// Runs the batch through the network. In Train mode dropout layers zero each
/// unit with their rate and rescale survivors by 1/(1-rate), with masks drawn
/// from `dropout_seed`; in Infer mode dropout is the identity and no cache is
/// kept.
inline ForwardResult forward(const NetworkSpec& spec, const Parameters& params, const Matrix& batch, Mode mode,
                             std::uint64_t dropout_seed = 0) {
    detail::check_input(spec, batch);
    ForwardResult result;
    auto& cache = result.cache;
    cache.train = mode == Mode::Train;
    if (cache.train) cache.input = batch;
    Matrix a = batch;
    std::size_t dense_index = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        Matrix mask;
        if (const auto* d = std::get_if<Dense>(&spec.layers[i])) {
            const auto& p = params.layers.at(dense_index++);
            Matrix z(a.rows(), p.weights.cols());
            z.noalias() = a * p.weights;
            z.rowwise() += p.bias;
            detail::apply_activation(z, d->activation);
            a = std::move(z);
        } else if (const double rate = std::get<Dropout>(spec.layers[i]).rate; cache.train && rate > 0.0) {
            mask = detail::dropout_mask(a.rows(), a.cols(), rate, derive_seed(dropout_seed, "dropout", i));
            a = a.cwiseProduct(mask);
        }
        if (cache.train) {
            cache.outputs.push_back(a);
            cache.masks.push_back(std::move(mask));
        }
    }
    if (!a.allFinite()) throw numeric_error("NonFiniteActivation", "network produced non-finite activations");
    result.output = std::move(a);
    return result;
}

/// Inference-mode forward pass without a cache.
inline Matrix infer(const NetworkSpec& spec, const Parameters& params, const Matrix& batch) {
    return forward(spec, params, batch, Mode::Infer).output;
}

/// Mean over rows of w[y] * -log p[y], with probabilities clamped at 1e-12.
/// `classes` are 0-based class indices.
inline double loss_weighted_ce(const Matrix& probs, std::span<const int> classes, std::span<const double> weights) {
    if (static_cast<std::size_t>(probs.rows()) != classes.size())
        throw data_error("ShapeMismatch", "label count does not match probability rows");
    if (probs.rows() == 0) return 0.0;
    double total = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        const int y = classes[static_cast<std::size_t>(i)];
        if (y < 0 || y >= probs.cols() || static_cast<std::size_t>(y) >= weights.size())
            throw data_error("LabelOutOfRange", "class index " + std::to_string(y) + " out of range");
        total += weights[static_cast<std::size_t>(y)] * -std::log(std::max(probs(i, y), 1e-12));
    }
    return total / static_cast<double>(probs.rows());
}

/// Mean of squared differences over all elements.
inline double loss_mse(const Matrix& output, const Matrix& target) {
    if (output.rows() != target.rows() || output.cols() != target.cols())
        throw data_error("ShapeMismatch", "output and target shapes differ");
    if (output.size() == 0) return 0.0;
    return (output - target).squaredNorm() / static_cast<double>(output.size());
}

/// Reconstruction/regression objective against a target matrix.
struct MseObjective {
    const Matrix* target = nullptr;
};

/// Softmax cross-entropy with per-class weights; `classes` are 0-based.
struct CrossEntropyObjective {
    std::span<const int> classes;
    std::span<const double> weights;
};

using Objective = std::variant<MseObjective, CrossEntropyObjective>;

inline double data_loss(const Objective& objective, const Matrix& output) {
    if (const auto* mse = std::get_if<MseObjective>(&objective)) return loss_mse(output, *mse->target);
    const auto& ce = std::get<CrossEntropyObjective>(objective);
    return loss_weighted_ce(output, ce.classes, ce.weights);
}

/// penalty * sum ||W||^2 / 2 over dense weights (biases excluded).
inline double l2_term(const NetworkSpec& spec, const Parameters& params) {
    double s = 0.0;
    for (const auto& l : params.layers) s += l.weights.squaredNorm();
    return 0.5 * spec.l2_penalty * s;
}

/// Exact gradient of data loss + L2 term for the batch recorded in `cache`.
/// The softmax/cross-entropy pair is differentiated jointly at the output:
/// (p - onehot(y)) * w[y] / n per row.
inline Parameters backward(const NetworkSpec& spec, const Parameters& params, const ForwardCache& cache,
                           const Objective& objective) {
    if (!cache.train || cache.masks.size() != spec.layers.size() || cache.outputs.size() != spec.layers.size())
        throw config_error("CacheMismatch", "cache does not come from a training-mode pass of this network");

    const Matrix& out = cache.outputs.back();
    const auto n = static_cast<double>(out.rows());
    Matrix grad;            // d loss / d (output of current layer)
    bool fused = false;     // grad already w.r.t. the pre-activation of the last dense layer

    if (const auto* mse = std::get_if<MseObjective>(&objective)) {
        if (mse->target->rows() != out.rows() || mse->target->cols() != out.cols())
            throw data_error("ShapeMismatch", "target shape differs from network output");
        grad = (out - *mse->target) * (2.0 / static_cast<double>(out.size() == 0 ? 1 : out.size()));
    } else {
        const auto& ce = std::get<CrossEntropyObjective>(objective);
        const auto* last = std::get_if<Dense>(&spec.layers.back());
        if (!last || last->activation != Activation::Softmax)
            throw config_error("InvalidSpec", "cross-entropy requires a final softmax layer");
        if (ce.classes.size() != static_cast<std::size_t>(out.rows()))
            throw data_error("ShapeMismatch", "label count does not match batch rows");
        grad = out;
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            const int y = ce.classes[static_cast<std::size_t>(i)];
            if (y < 0 || y >= out.cols() || static_cast<std::size_t>(y) >= ce.weights.size())
                throw data_error("LabelOutOfRange", "class index " + std::to_string(y) + " out of range");
            grad(i, y) -= 1.0;
            grad.row(i) *= ce.weights[static_cast<std::size_t>(y)] / n;
        }
        fused = true;
    }

    Parameters grads = Parameters::zeros_like(params);
    std::size_t dense_index = params.layers.size();
    for (std::size_t li = spec.layers.size(); li-- > 0;) {
        if (const auto* d = std::get_if<Dense>(&spec.layers[li])) {
            --dense_index;
            const Matrix& a = cache.outputs[li];
            if (!(fused && li + 1 == spec.layers.size())) {
                switch (d->activation) {
                case Activation::Relu: grad = grad.cwiseProduct((a.array() > 0.0).cast<double>().matrix()); break;
                case Activation::Linear: break;
                case Activation::Softmax: {
                    const Vector dot = grad.cwiseProduct(a).rowwise().sum();
                    grad = a.cwiseProduct(grad - dot.replicate(1, grad.cols()));
                    break;
                }
                }
            }
            const auto& p = params.layers[dense_index];
            auto& g = grads.layers[dense_index];
            g.weights.noalias() = cache.input_of(li).transpose() * grad;
            g.weights += spec.l2_penalty * p.weights;
            g.bias = grad.colwise().sum();
            if (li > 0) {
                Matrix next(grad.rows(), p.weights.rows());
                next.noalias() = grad * p.weights.transpose();
                grad = std::move(next);
            }
        } else if (cache.masks[li].size() != 0) {
            grad = grad.cwiseProduct(cache.masks[li]);
        }
    }
    return grads;
}

struct AdamState {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    Parameters m;
    Parameters v;
};

inline AdamState make_adam(const Parameters& params, double learning_rate = 0.001) {
    AdamState s;
    s.learning_rate = learning_rate;
    s.m = Parameters::zeros_like(params);
    s.v = Parameters::zeros_like(params);
    return s;
}

/// One bias-corrected Adam update, in place.
inline void adam_step(Parameters& params, const Parameters& grads, AdamState& state) {
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    const auto update = [&](auto& w, const auto& g, auto& m, auto& v) {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        w.array() -= state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
    };
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        update(params.layers[i].weights, grads.layers[i].weights, state.m.layers[i].weights, state.v.layers[i].weights);
        update(params.layers[i].bias, grads.layers[i].bias, state.m.layers[i].bias, state.v.layers[i].bias);
    }
}

/// Data loss plus L2 term for a training-mode pass with fixed dropout masks.
inline double objective_value(const NetworkSpec& spec, const Parameters& params, const Matrix& batch,
                              const Objective& objective, std::uint64_t dropout_seed) {
    const auto out = forward(spec, params, batch, Mode::Train, dropout_seed).output;
    return data_loss(objective, out) + l2_term(spec, params);
}

struct GradientCheckOptions {
    std::size_t coordinates = 200;  // sampled parameter coordinates (all when fewer exist)
    double step = 1e-5;
    std::uint64_t seed = 0;         // coordinate sampling and dropout masks
};

struct GradientCheckResult {
    double max_relative_error = 0.0;
    std::size_t coordinates_checked = 0;
};

namespace detail {
inline double& coordinate(Parameters& p, std::size_t flat) {
    for (auto& l : p.layers) {
        const auto w = static_cast<std::size_t>(l.weights.size());
        if (flat < w) return l.weights.data()[flat];
        flat -= w;
        const auto b = static_cast<std::size_t>(l.bias.size());
        if (flat < b) return l.bias.data()[flat];
        flat -= b;
    }
    throw config_error("InvalidArgument", "parameter coordinate out of range");
}
} // namespace detail

/// Compares `analytic` against central differences on sampled coordinates and
/// returns max |a - n| / max(|a|, |n|, 1e-8). Dropout masks are replayed from
/// the option seed so networks with dropout can be checked too.
inline GradientCheckResult compare_gradients(const NetworkSpec& spec, const Parameters& params, const Matrix& batch,
                                             const Objective& objective, const Parameters& analytic,
                                             const GradientCheckOptions& options = {}) {
    const std::size_t total = params.count();
    std::vector<std::size_t> coords;
    if (total <= options.coordinates) {
        coords.resize(total);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
    } else {
        Rng rng(derive_seed(options.seed, "gradient_check"));
        std::set<std::size_t> chosen;
        while (chosen.size() < options.coordinates) chosen.insert(static_cast<std::size_t>(rng.below(total)));
        coords.assign(chosen.begin(), chosen.end());
    }

    Parameters probe = params;
    Parameters grads = analytic;
    GradientCheckResult result;
    for (auto flat : coords) {
        double& w = detail::coordinate(probe, flat);
        const double original = w;
        w = original + options.step;
        const double up = objective_value(spec, probe, batch, objective, options.seed);
        w = original - options.step;
        const double down = objective_value(spec, probe, batch, objective, options.seed);
        w = original;
        const double numeric = (up - down) / (2.0 * options.step);
        const double a = detail::coordinate(grads, flat);
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
        result.max_relative_error = std::max(result.max_relative_error, rel);
        ++result.coordinates_checked;
    }
    return result;
}

inline GradientCheckResult gradient_check(const NetworkSpec& spec, const Parameters& params, const Matrix& batch,
                                          const Objective& objective, const GradientCheckOptions& options = {}) {
    const auto fwd = forward(spec, params, batch, Mode::Train, options.seed);
    return compare_gradients(spec, params, batch, objective, backward(spec, params, fwd.cache, objective), options);
}

} // namespace sevnet
