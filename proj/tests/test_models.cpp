#include <sevnet/models.hpp>

#include <gtest/gtest.h>

#include <numeric>

using namespace sevnet;

namespace {

/// Rows drawn as latent(n x k) * mixing(k x d) + small noise, standardized.
Matrix low_rank_data(Eigen::Index n, Eigen::Index d, Eigen::Index k, std::uint64_t seed, double noise = 0.05) {
    Rng rng(seed);
    Matrix latent(n, k);
    Matrix mixing(k, d);
    for (Eigen::Index i = 0; i < latent.size(); ++i) latent.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < mixing.size(); ++i) mixing.data()[i] = rng.normal();
    Matrix x = latent * mixing;
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += noise * rng.normal();
    const RowVector mean = x.colwise().mean();
    x.rowwise() -= mean;
    const RowVector sd = (x.array().square().colwise().sum() / static_cast<double>(n)).sqrt();
    x = x.array().rowwise() / sd.array();
    return x;
}

struct Labelled {
    Matrix x;
    std::vector<int> y;
};

/// Two Gaussian classes in `d` dimensions; class 2 shifted by `shift` along every axis.
Labelled two_classes(std::size_t n_major, std::size_t n_minor, Eigen::Index d, double shift, std::uint64_t seed) {
    Rng rng(seed);
    Labelled out;
    out.x.resize(static_cast<Eigen::Index>(n_major + n_minor), d);
    std::vector<int> y(n_major, 1);
    y.insert(y.end(), n_minor, 2);
    rng.shuffle(std::span<int>(y));
    for (Eigen::Index i = 0; i < out.x.rows(); ++i)
        for (Eigen::Index c = 0; c < d; ++c)
            out.x(i, c) = rng.normal() + (y[static_cast<std::size_t>(i)] == 2 ? shift : 0.0);
    out.y = std::move(y);
    return out;
}

double recall_of(const std::vector<int>& pred, const std::vector<int>& truth, int cls) {
    return per_class_recall(confusion(pred, truth, 2))[static_cast<std::size_t>(cls - 1)];
}

ClassifierConfig small_classifier() {
    ClassifierConfig c;
    c.initial_neurons = 32;
    c.initial_dropout = 0.2;
    c.batch_size = 64;
    c.l2_penalty = 1e-4;
    c.epochs = 30;
    c.learning_rate = 0.003;
    c.seed = 5;
    return c;
}

} // namespace

TEST(ClassWeights, BalancedLabelsGiveUnitWeights) {
    std::vector<int> labels;
    for (int i = 0; i < 40; ++i) labels.push_back(1 + i % 4);
    for (double w : compute_class_weights(labels, 4).w) EXPECT_DOUBLE_EQ(w, 1.0);
}

TEST(ClassWeights, HandComputed) {
    const auto w = compute_class_weights(std::vector<int>{1, 2, 2, 2}, 2).w;
    EXPECT_DOUBLE_EQ(w[0], 2.0);
    EXPECT_NEAR(w[1], 0.6667, 1e-4);
}

TEST(ClassWeights, MissingClassFails) {
    try {
        compute_class_weights(std::vector<int>{1, 1, 3}, 3);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "MissingClass");
    }
}

TEST(ClassWeights, WeightedMassEqualsSampleCountProperty) {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> counts(2 + rng.below(5));
        for (auto& c : counts) c = 1 + rng.below(1000);
        const auto w = balanced_weights(counts).w;
        double mass = 0.0;
        std::size_t n = 0;
        for (std::size_t c = 0; c < counts.size(); ++c) {
            mass += w[c] * static_cast<double>(counts[c]);
            n += counts[c];
        }
        EXPECT_NEAR(mass, static_cast<double>(n), 1e-9 * static_cast<double>(n));
    }
}

TEST(BuildClassifier, CommittedTopology) {
    ClassifierConfig c;
    c.initial_neurons = 1218;
    c.initial_dropout = 0.3;
    const auto spec = build_classifier(c, 1218, 4);
    std::vector<std::size_t> widths;
    std::vector<double> rates;
    for (const auto& l : spec.layers) {
        if (const auto* d = std::get_if<Dense>(&l)) widths.push_back(d->fan_out);
        else rates.push_back(std::get<Dropout>(l).rate);
    }
    EXPECT_EQ(widths, (std::vector<std::size_t>{1218, 609, 304, 4}));
    ASSERT_EQ(rates.size(), 2u);
    EXPECT_DOUBLE_EQ(rates[0], 0.3);
    EXPECT_NEAR(rates[1], 0.2, 1e-12);
    EXPECT_DOUBLE_EQ(spec.l2_penalty, c.l2_penalty);

    c.initial_dropout = 0.2;
    const auto encoded = build_classifier(c, 256, 4);
    EXPECT_EQ(std::get<Dense>(encoded.layers[0]).fan_in, 256u);
    EXPECT_EQ(encoded.output_width(), 4u);
    EXPECT_NEAR(std::get<Dropout>(encoded.layers[3]).rate, 0.1, 1e-12);
}

TEST(BuildAutoencoder, MirroredTopology) {
    AutoencoderConfig c;
    c.input_dim = 1218;
    const auto spec = build_autoencoder(c);
    std::vector<std::size_t> widths;
    for (const auto& d : spec.dense_layers()) widths.push_back(d.fan_out);
    EXPECT_EQ(widths, (std::vector<std::size_t>{512, 256, 512, 1218}));
    EXPECT_EQ(spec.dense_layers().back().activation, Activation::Linear);
    EXPECT_EQ(spec.dense_layers()[1].activation, Activation::Relu);
}

TEST(Autoencoder, TrainingHalvesReconstructionError) {
    const Matrix x = low_rank_data(200, 32, 8, 1);
    AutoencoderConfig c;
    c.input_dim = 32;
    c.encoder_widths = {16, 8};
    c.epochs = 50;
    c.batch_size = 20;
    c.seed = 3;
    const auto ae = train_autoencoder(c, x.topRows(160), x.bottomRows(40));
    EXPECT_LT(ae.history.back().train_mse, 0.5 * ae.initial_train_mse);

    std::size_t non_increasing = 0;
    for (std::size_t e = 1; e < ae.history.size(); ++e) non_increasing += ae.history[e].train_mse <= ae.history[e - 1].train_mse;
    EXPECT_GE(static_cast<double>(non_increasing), 0.9 * static_cast<double>(ae.history.size() - 1));

    const auto again = train_autoencoder(c, x.topRows(160), x.bottomRows(40));
    ASSERT_EQ(again.history.size(), ae.history.size());
    for (std::size_t e = 0; e < ae.history.size(); ++e) {
        EXPECT_EQ(again.history[e].train_mse, ae.history[e].train_mse);
        EXPECT_EQ(again.history[e].val_mse, ae.history[e].val_mse);
    }
}

TEST(Autoencoder, IdentitySizedLinearNetworkReconstructs) {
    const Matrix x = low_rank_data(120, 6, 6, 2, 0.0);
    AutoencoderConfig c;
    c.input_dim = 6;
    c.encoder_widths = {6};
    c.hidden_activation = Activation::Linear;
    c.epochs = 400;
    c.batch_size = 20;
    c.learning_rate = 0.01;
    const auto ae = train_autoencoder(c, x.topRows(90), x.bottomRows(30));
    EXPECT_LT(ae.history.back().val_mse, 1e-3);
}

TEST(Autoencoder, WidthMismatch) {
    AutoencoderConfig c;
    c.input_dim = 5;
    c.encoder_widths = {3};
    try {
        train_autoencoder(c, Matrix::Zero(4, 6), Matrix::Zero(2, 6));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "WidthMismatch");
    }
}

TEST(Encode, WidthEmptyInputAndRowwisePurity) {
    const Matrix x = low_rank_data(50, 12, 3, 4);
    AutoencoderConfig c;
    c.input_dim = 12;
    c.encoder_widths = {8, 4};
    c.epochs = 3;
    c.batch_size = 10;
    const auto ae = train_autoencoder(c, x, x);
    const Matrix z = encode(ae, x);
    EXPECT_EQ(z.cols(), 4);
    EXPECT_EQ(z.rows(), 50);
    EXPECT_EQ(encode(ae, Matrix(0, 12)).rows(), 0);
    EXPECT_EQ(encode(ae, Matrix(0, 12)).cols(), 4);
    EXPECT_EQ(encode(ae, x), z);

    Matrix stacked(50, 4);
    stacked.topRows(17) = encode(ae, Matrix(x.topRows(17)));
    stacked.bottomRows(33) = encode(ae, Matrix(x.bottomRows(33)));
    EXPECT_TRUE(stacked.isApprox(z, 1e-12));
    EXPECT_THROW(encode(ae, Matrix::Zero(2, 11)), Error);
}

TEST(Predict, ArgmaxWithLowerIndexTieBreak) {
    Matrix p(3, 4);
    p << 0.1, 0.7, 0.1, 0.1,
         0.5, 0.5, 0.0, 0.0,
         0.2, 0.2, 0.3, 0.3;
    EXPECT_EQ(predict_from_scores(p), (std::vector<int>{2, 1, 3}));
    EXPECT_TRUE(predict_from_scores(Matrix(0, 4)).empty());
}

TEST(Predict, InvariantUnderIncreasingTransformProperty) {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix logits(10, 4);
        for (Eigen::Index i = 0; i < logits.size(); ++i) logits.data()[i] = rng.uniform(-5, 5);
        const Matrix transformed = (logits.array() * 3.0 + 1.0).exp().matrix();
        EXPECT_EQ(predict_from_scores(logits), predict_from_scores(transformed));
    }
}

TEST(Classifier, SeparableDataReachesLowBer) {
    const auto train = two_classes(300, 300, 4, 4.0, 1);
    const auto val = two_classes(100, 100, 4, 4.0, 2);
    auto c = small_classifier();
    const auto model = train_classifier(c, train.x, train.y, val.x, val.y, 2, std::nullopt);
    EXPECT_EQ(model.history.size(), 30u);
    double best = 1.0;
    for (const auto& e : model.history) best = std::min(best, e.val_ber);
    EXPECT_LT(best, 0.05);
    EXPECT_LT(evaluate(model.predict(val.x), val.y, 2).ber, 0.05);
}

TEST(Classifier, ClassWeightsRecoverMinorityClass) {
    const auto train = two_classes(1980, 20, 2, 1.5, 11);
    const auto val = two_classes(990, 10, 2, 1.5, 12);
    const auto test = two_classes(1980, 20, 2, 1.5, 13);
    const auto c = small_classifier();

    const auto plain = train_classifier(c, train.x, train.y, val.x, val.y, 2, std::nullopt);
    const auto weighted =
        train_classifier(c, train.x, train.y, val.x, val.y, 2, compute_class_weights(train.y, 2));
    const auto p_plain = plain.predict(test.x);
    const auto p_weighted = weighted.predict(test.x);
    EXPECT_LT(recall_of(p_plain, test.y, 2), 0.1);
    EXPECT_GT(recall_of(p_weighted, test.y, 2), 0.5);
    EXPECT_LT(evaluate(p_weighted, test.y, 2).ber, evaluate(p_plain, test.y, 2).ber);
}

TEST(Classifier, UnitWeightsMatchUnweightedTrajectory) {
    const auto train = two_classes(80, 40, 3, 1.0, 21);
    const auto val = two_classes(20, 10, 3, 1.0, 22);
    auto c = small_classifier();
    c.epochs = 5;
    c.use_class_weights = false;
    const auto a = train_classifier(c, train.x, train.y, val.x, val.y, 2, std::nullopt);
    const auto b = train_classifier(c, train.x, train.y, val.x, val.y, 2, ClassWeights{{1.0, 1.0}});
    EXPECT_TRUE(a.params == b.params);
    for (std::size_t e = 0; e < a.history.size(); ++e) EXPECT_EQ(a.history[e].train_loss, b.history[e].train_loss);
}

TEST(Classifier, LabelErrors) {
    const auto train = two_classes(10, 10, 2, 1.0, 1);
    auto y = train.y;
    y[0] = 3;
    try {
        train_classifier(small_classifier(), train.x, y, train.x, train.y, 2, std::nullopt);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "LabelOutOfRange");
    }
}
