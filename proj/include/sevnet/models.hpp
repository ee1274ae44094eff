#pragma once

// The two trained models: a deep autoencoder whose encoder half reduces
// dimensionality, and a class-weighted dense severity classifier.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "metrics.hpp"
#include "neural.hpp"
#include "preprocess.hpp"
#include "random.hpp"

namespace sevnet {

// ---------------------------------------------------------------------------
// Class weights

struct ClassWeights {
    std::vector<double> w; // index c-1 for class c
};

/// w[c] = N / (K * n_c) from per-class counts; every class must be present.
inline ClassWeights balanced_weights(std::span<const std::size_t> counts) {
    const auto K = static_cast<double>(counts.size());
    const auto N = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
    ClassWeights out;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) throw data_error("MissingClass", "class " + std::to_string(c + 1) + " has no training rows");
        out.w.push_back(N / (K * static_cast<double>(counts[c])));
    }
    return out;
}

/// Balanced weights from training labels in 1..K.
inline ClassWeights compute_class_weights(std::span<const int> labels, int K) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(K), 0);
    for (int y : labels) {
        if (y < 1 || y > K) throw data_error("LabelOutOfRange", "label " + std::to_string(y) + " not in 1.." + std::to_string(K));
        ++counts[static_cast<std::size_t>(y - 1)];
    }
    return balanced_weights(counts);
}

namespace detail {

/// Shuffled mini-batch row lists for one epoch.
inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
    return batches;
}

inline void require_finite(double loss, const char* what) {
    if (!std::isfinite(loss)) throw numeric_error("NonFiniteLoss", std::string{what} + " became non-finite");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Autoencoder

struct AutoencoderConfig {
    std::size_t input_dim = 0;
    std::vector<std::size_t> encoder_widths{512, 256}; // last entry is the latent width
    std::size_t epochs = 200;
    std::size_t batch_size = 1000;
    std::uint64_t seed = 0;
    double learning_rate = 0.001;
    Activation hidden_activation = Activation::Relu;

    [[nodiscard]] std::size_t latent_dim() const { return encoder_widths.back(); }

    void validate() const {
        if (input_dim == 0) throw config_error("InvalidConfig", "autoencoder input_dim must be positive");
        if (encoder_widths.empty()) throw config_error("InvalidConfig", "autoencoder needs at least one encoder layer");
        if (latent_dim() > input_dim) throw config_error("InvalidConfig", "latent width exceeds input width");
        if (epochs == 0 || batch_size == 0) throw config_error("InvalidConfig", "epochs and batch_size must be positive");
    }
};

/// input -> widths... -> latent, mirrored back to input with a linear output layer.
inline NetworkSpec build_autoencoder(const AutoencoderConfig& cfg) {
    cfg.validate();
    NetworkSpec spec;
    std::size_t prev = cfg.input_dim;
    for (auto w : cfg.encoder_widths) {
        spec.layers.emplace_back(Dense{prev, w, cfg.hidden_activation});
        prev = w;
    }
    for (std::size_t i = cfg.encoder_widths.size() - 1; i-- > 0;) {
        spec.layers.emplace_back(Dense{prev, cfg.encoder_widths[i], cfg.hidden_activation});
        prev = cfg.encoder_widths[i];
    }
    spec.layers.emplace_back(Dense{prev, cfg.input_dim, Activation::Linear});
    spec.validate();
    return spec;
}

struct AutoencoderEpoch {
    double train_mse = 0.0;
    double val_mse = 0.0;
};

struct Autoencoder {
    AutoencoderConfig config;
    NetworkSpec spec;
    Parameters params;
    double initial_train_mse = 0.0;
    double initial_val_mse = 0.0;
    std::vector<AutoencoderEpoch> history; // one entry per epoch, measured after the epoch
};

inline double reconstruction_mse(const NetworkSpec& spec, const Parameters& params, const Matrix& x) {
    return x.rows() == 0 ? 0.0 : loss_mse(infer(spec, params, x), x);
}

/// Mini-batch Adam on mean squared reconstruction error.
inline Autoencoder train_autoencoder(const AutoencoderConfig& cfg, const Matrix& train, const Matrix& val) {
    if (static_cast<std::size_t>(train.cols()) != cfg.input_dim || static_cast<std::size_t>(val.cols()) != cfg.input_dim)
        throw data_error("WidthMismatch", "autoencoder data width does not match input_dim");
    Autoencoder ae;
    ae.config = cfg;
    ae.spec = build_autoencoder(cfg);
    ae.params = init_params(ae.spec, derive_seed(cfg.seed, "ae.init"));
    auto adam = make_adam(ae.params, cfg.learning_rate);
    ae.initial_train_mse = reconstruction_mse(ae.spec, ae.params, train);
    ae.initial_val_mse = reconstruction_mse(ae.spec, ae.params, val);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches = detail::epoch_batches(static_cast<std::size_t>(train.rows()), cfg.batch_size,
                                                   derive_seed(cfg.seed, "ae.shuffle", epoch));
        for (const auto& rows : batches) {
            const Matrix x = take_rows(train, rows);
            const auto fwd = forward(ae.spec, ae.params, x, Mode::Train);
            const auto grads = backward(ae.spec, ae.params, fwd.cache, MseObjective{&x});
            adam_step(ae.params, grads, adam);
        }
        AutoencoderEpoch rec{reconstruction_mse(ae.spec, ae.params, train), reconstruction_mse(ae.spec, ae.params, val)};
        detail::require_finite(rec.train_mse, "autoencoder training loss");
        ae.history.push_back(rec);
    }
    return ae;
}

/// The encoder half as a standalone network.
inline std::pair<NetworkSpec, Parameters> encoder_of(const Autoencoder& ae) {
    const std::size_t k = ae.config.encoder_widths.size();
    NetworkSpec spec;
    Parameters params;
    const auto dense = ae.spec.dense_layers();
    for (std::size_t i = 0; i < k; ++i) {
        spec.layers.emplace_back(dense[i]);
        params.layers.push_back(ae.params.layers[i]);
    }
    return {spec, params};
}

/// Latent representation (inference mode, no dropout).
inline Matrix encode(const Autoencoder& ae, const Matrix& data) {
    if (static_cast<std::size_t>(data.cols()) != ae.config.input_dim)
        throw data_error("WidthMismatch", "encode input width does not match the autoencoder");
    if (data.rows() == 0) return Matrix(0, static_cast<Eigen::Index>(ae.config.latent_dim()));
    const auto [spec, params] = encoder_of(ae);
    return infer(spec, params, data);
}

inline FeatureMatrix encode(const Autoencoder& ae, const FeatureMatrix& data) {
    FeatureMatrix out{encode(ae, data.values), {}};
    for (std::size_t i = 0; i < ae.config.latent_dim(); ++i) out.labels.push_back("latent" + std::to_string(i));
    return out;
}

// ---------------------------------------------------------------------------
// Classifier

struct ClassifierConfig {
    std::size_t initial_neurons = 1218;
    double initial_dropout = 0.3;
    std::size_t batch_size = 5000;
    double l2_penalty = 0.0001;
    std::size_t epochs = 50;
    bool use_class_weights = true;
    std::uint64_t seed = 0;
    double learning_rate = 0.001;

    void validate() const {
        if (initial_neurons < 4) throw config_error("InvalidConfig", "initial_neurons must be at least 4");
        if (!(initial_dropout >= 0.0 && initial_dropout < 1.0)) throw config_error("InvalidConfig", "dropout must lie in [0,1)");
        if (batch_size == 0 || epochs == 0) throw config_error("InvalidConfig", "epochs and batch_size must be positive");
        if (!(l2_penalty >= 0.0) || !(learning_rate > 0.0)) throw config_error("InvalidConfig", "invalid l2 or learning rate");
    }
};

/// input -> N relu -> dropout(p) -> N/2 relu -> dropout(max(p-0.1, 0.1)) -> N/4 relu -> K softmax.
inline NetworkSpec build_classifier(const ClassifierConfig& cfg, std::size_t input_dim, int K) {
    cfg.validate();
    const std::size_t n = cfg.initial_neurons;
    NetworkSpec spec;
    spec.l2_penalty = cfg.l2_penalty;
    spec.layers = {
        Dense{input_dim, n, Activation::Relu},
        Dropout{cfg.initial_dropout},
        Dense{n, n / 2, Activation::Relu},
        Dropout{std::max(cfg.initial_dropout - 0.1, 0.1)},
        Dense{n / 2, n / 4, Activation::Relu},
        Dense{n / 4, static_cast<std::size_t>(K), Activation::Softmax},
    };
    spec.validate();
    return spec;
}

/// Argmax class (1..K) per row; ties go to the lower class.
inline std::vector<int> predict_from_scores(const Matrix& scores) {
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(scores.rows()));
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < scores.cols(); ++c)
            if (scores(r, c) > scores(r, best)) best = c;
        out.push_back(static_cast<int>(best) + 1);
    }
    return out;
}

inline std::vector<int> predict(const NetworkSpec& spec, const Parameters& params, const Matrix& features) {
    if (features.rows() == 0) return {};
    return predict_from_scores(infer(spec, params, features));
}

struct ClassifierEpoch {
    double train_loss = 0.0;   // mean mini-batch objective (data + L2)
    double val_accuracy = 0.0;
    double val_ber = 0.0;
};

struct Classifier {
    ClassifierConfig config;
    int classes = 0;
    NetworkSpec spec;
    Parameters params;          // checkpoint with the lowest validation BER
    std::size_t best_epoch = 0; // 1-based
    ClassWeights weights;
    std::vector<ClassifierEpoch> history;

    [[nodiscard]] std::vector<int> predict(const Matrix& features) const { return sevnet::predict(spec, params, features); }
};

/// Mini-batch Adam on class-weighted cross-entropy plus L2. Without weights
/// every class counts 1. The returned parameters are those of the epoch with
/// the lowest validation BER (earliest on ties); an empty validation set keeps
/// the final epoch.
inline Classifier train_classifier(const ClassifierConfig& cfg, const Matrix& train_x, std::span<const int> train_y,
                                   const Matrix& val_x, std::span<const int> val_y, int K,
                                   const std::optional<ClassWeights>& weights) {
    if (static_cast<std::size_t>(train_x.rows()) != train_y.size() || static_cast<std::size_t>(val_x.rows()) != val_y.size())
        throw data_error("LengthMismatch", "feature rows and label counts differ");
    if (train_x.cols() != val_x.cols()) throw data_error("WidthMismatch", "train and validation widths differ");
    if (train_x.rows() == 0) throw data_error("EmptyInput", "no training rows");

    Classifier model;
    model.config = cfg;
    model.classes = K;
    model.spec = build_classifier(cfg, static_cast<std::size_t>(train_x.cols()), K);
    model.params = init_params(model.spec, derive_seed(cfg.seed, "classifier.init"));
    model.weights = weights.value_or(ClassWeights{std::vector<double>(static_cast<std::size_t>(K), 1.0)});
    if (model.weights.w.size() != static_cast<std::size_t>(K)) throw config_error("InvalidConfig", "class weight count differs from K");

    std::vector<int> classes(train_y.size());
    for (std::size_t i = 0; i < train_y.size(); ++i) {
        if (train_y[i] < 1 || train_y[i] > K) throw data_error("LabelOutOfRange", "training label out of range");
        classes[i] = train_y[i] - 1;
    }

    auto adam = make_adam(model.params, cfg.learning_rate);
    Parameters best = model.params;
    double best_ber = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches = detail::epoch_batches(classes.size(), cfg.batch_size,
                                                   derive_seed(cfg.seed, "classifier.shuffle", epoch));
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const Matrix x = take_rows(train_x, batches[b]);
            const auto y = take_rows(classes, batches[b]);
            const CrossEntropyObjective objective{y, model.weights.w};
            const auto fwd = forward(model.spec, model.params, x, Mode::Train,
                                     derive_seed(cfg.seed, "classifier.dropout", (epoch << 32) | b));
            const double loss = data_loss(objective, fwd.output) + l2_term(model.spec, model.params);
            detail::require_finite(loss, "classifier training loss");
            loss_sum += loss;
            adam_step(model.params, backward(model.spec, model.params, fwd.cache, objective), adam);
        }

        ClassifierEpoch rec;
        rec.train_loss = loss_sum / static_cast<double>(batches.size());
        if (val_x.rows() > 0) {
            const auto report = evaluate(model.predict(val_x), val_y, K);
            rec.val_accuracy = report.accuracy;
            rec.val_ber = report.ber;
            if (report.ber < best_ber) {
                best_ber = report.ber;
                best = model.params;
                model.best_epoch = epoch + 1;
            }
        } else {
            best = model.params;
            model.best_epoch = epoch + 1;
        }
        model.history.push_back(rec);
    }
    model.params = std::move(best);
    return model;
}

// ---------------------------------------------------------------------------
// JSON views of configs and histories

inline void to_json(nlohmann::json& j, const AutoencoderConfig& c) {
    j = {{"input_dim", c.input_dim},     {"encoder_widths", c.encoder_widths},
         {"epochs", c.epochs},           {"batch_size", c.batch_size},
         {"seed", c.seed},               {"learning_rate", c.learning_rate},
         {"hidden_activation", std::string{to_string(c.hidden_activation)}}};
}

inline void from_json(const nlohmann::json& j, AutoencoderConfig& c) {
    const AutoencoderConfig d;
    c.input_dim = j.value("input_dim", d.input_dim);
    c.encoder_widths = j.value("encoder_widths", d.encoder_widths);
    c.epochs = j.value("epochs", d.epochs);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.seed = j.value("seed", d.seed);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.hidden_activation = parse_activation(j.value("hidden_activation", std::string{"relu"}));
}

inline void to_json(nlohmann::json& j, const ClassifierConfig& c) {
    j = {{"initial_neurons", c.initial_neurons}, {"initial_dropout", c.initial_dropout},
         {"batch_size", c.batch_size},           {"l2_penalty", c.l2_penalty},
         {"epochs", c.epochs},                   {"use_class_weights", c.use_class_weights},
         {"seed", c.seed},                       {"learning_rate", c.learning_rate}};
}

inline void from_json(const nlohmann::json& j, ClassifierConfig& c) {
    const ClassifierConfig d;
    c.initial_neurons = j.value("initial_neurons", d.initial_neurons);
    c.initial_dropout = j.value("initial_dropout", d.initial_dropout);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.l2_penalty = j.value("l2_penalty", d.l2_penalty);
    c.epochs = j.value("epochs", d.epochs);
    c.use_class_weights = j.value("use_class_weights", d.use_class_weights);
    c.seed = j.value("seed", d.seed);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
}

inline nlohmann::json history_json(const Autoencoder& ae) {
    nlohmann::json j;
    j["initial"] = {{"train_mse", ae.initial_train_mse}, {"val_mse", ae.initial_val_mse}};
    j["epochs"] = nlohmann::json::array();
    for (std::size_t e = 0; e < ae.history.size(); ++e)
        j["epochs"].push_back({{"epoch", e + 1}, {"train_mse", ae.history[e].train_mse}, {"val_mse", ae.history[e].val_mse}});
    return j;
}

inline nlohmann::json history_json(const Classifier& m) {
    nlohmann::json j;
    j["best_epoch"] = m.best_epoch;
    j["class_weights"] = m.weights.w;
    j["epochs"] = nlohmann::json::array();
    for (std::size_t e = 0; e < m.history.size(); ++e)
        j["epochs"].push_back({{"epoch", e + 1},
                               {"train_loss", m.history[e].train_loss},
                               {"val_accuracy", m.history[e].val_accuracy},
                               {"val_ber", m.history[e].val_ber}});
    return j;
}

} // namespace sevnet
