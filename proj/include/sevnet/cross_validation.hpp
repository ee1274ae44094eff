#pragma once

// Stratified k-fold cross-validation with per-fold retraining.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "metrics.hpp"
#include "models.hpp"
#include "parallel.hpp"
#include "preprocess.hpp"
#include "random.hpp"

namespace sevnet {

/// Data handed to a CV runner for one fold. The non-evaluation rows are split
/// 75/25 (stratified) into train and val so the runner can checkpoint.
struct FoldData {
    std::size_t fold = 0;
    std::uint64_t seed = 0;
    Matrix train_x;
    std::vector<int> train_y;
    Matrix val_x;
    std::vector<int> val_y;
    Matrix eval_x;
};

/// Trains from scratch on a fold and returns predictions (1..K) for eval_x.
using FoldRunner = std::function<std::vector<int>(const FoldData&)>;

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0; // sample (n-1) estimator
};

inline MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    if (values.empty()) return out;
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

struct CVResult {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> fold_seeds;
    std::vector<std::size_t> fold_sizes;
    std::vector<MetricsReport> folds;
    MeanStd accuracy;
    MeanStd ber;
};

struct CVOptions {
    std::size_t k = 10;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

/// Runs `runner` once per stratified fold (fold i is held out for evaluation)
/// and aggregates accuracy and BER. Folds may execute concurrently; results
/// are stored by fold index.
inline CVResult cross_validate(const FoldRunner& runner, const Matrix& features, std::span<const int> labels, int K,
                               const CVOptions& options = {}) {
    if (static_cast<std::size_t>(features.rows()) != labels.size())
        throw data_error("LengthMismatch", "feature rows and label counts differ");
    std::vector<std::size_t> counts(static_cast<std::size_t>(K), 0);
    for (int y : labels) {
        if (y < 1 || y > K) throw data_error("LabelOutOfRange", "label out of range");
        ++counts[static_cast<std::size_t>(y - 1)];
    }
    for (int c = 1; c <= K; ++c)
        if (counts[static_cast<std::size_t>(c - 1)] < options.k)
            throw data_error("ClassTooSmall", "class " + std::to_string(c) + " has fewer than " + std::to_string(options.k) + " rows");

    const auto fold_of = stratified_folds(labels, options.k, options.seed);
    CVResult result;
    result.k = options.k;
    result.seed = options.seed;
    result.folds.resize(options.k);
    result.fold_sizes.assign(options.k, 0);
    for (std::size_t i = 0; i < options.k; ++i) result.fold_seeds.push_back(derive_seed(options.seed, "cv.fold", i));

    parallel_for(options.k, options.jobs, [&](std::size_t i) {
        std::vector<std::size_t> eval_rows;
        std::vector<std::size_t> rest;
        for (std::size_t r = 0; r < labels.size(); ++r) (fold_of[r] == i ? eval_rows : rest).push_back(r);
        const auto rest_labels = take_rows(std::vector<int>(labels.begin(), labels.end()), rest);
        const std::vector<double> ratios{0.75, 0.25};
        const auto sub = stratified_partition(rest_labels, ratios, derive_seed(result.fold_seeds[i], "cv.subsplit"));

        FoldData fold;
        fold.fold = i;
        fold.seed = result.fold_seeds[i];
        std::vector<std::size_t> train_rows;
        std::vector<std::size_t> val_rows;
        for (auto s : sub[0]) train_rows.push_back(rest[s]);
        for (auto s : sub[1]) val_rows.push_back(rest[s]);
        fold.train_x = take_rows(features, train_rows);
        fold.val_x = take_rows(features, val_rows);
        fold.eval_x = take_rows(features, eval_rows);
        for (auto r : train_rows) fold.train_y.push_back(labels[r]);
        for (auto r : val_rows) fold.val_y.push_back(labels[r]);
        std::vector<int> eval_y;
        for (auto r : eval_rows) eval_y.push_back(labels[r]);

        const auto predicted = runner(fold);
        result.folds[i] = evaluate(predicted, eval_y, K);
        result.fold_sizes[i] = eval_rows.size();
    });

    std::vector<double> acc;
    std::vector<double> ber;
    for (const auto& f : result.folds) {
        acc.push_back(f.accuracy);
        ber.push_back(f.ber);
    }
    result.accuracy = mean_std(acc);
    result.ber = mean_std(ber);
    return result;
}

/// Runner that trains a fresh classifier per fold, with balanced class
/// weights from the fold's training rows when the config asks for them.
inline FoldRunner classifier_runner(ClassifierConfig cfg, int K) {
    return [cfg, K](const FoldData& fold) {
        ClassifierConfig c = cfg;
        c.seed = fold.seed;
        std::optional<ClassWeights> weights;
        if (c.use_class_weights) weights = compute_class_weights(fold.train_y, K);
        const auto model = train_classifier(c, fold.train_x, fold.train_y, fold.val_x, fold.val_y, K, weights);
        return model.predict(fold.eval_x);
    };
}

inline void to_json(nlohmann::json& j, const CVResult& r) {
    j["k"] = r.k;
    j["seed"] = r.seed;
    j["folds"] = nlohmann::json::array();
    for (std::size_t i = 0; i < r.folds.size(); ++i) {
        nlohmann::json f = r.folds[i];
        f["fold"] = i;
        f["seed"] = r.fold_seeds[i];
        f["rows"] = r.fold_sizes[i];
        j["folds"].push_back(std::move(f));
    }
    j["accuracy"] = {{"mean", r.accuracy.mean}, {"std", r.accuracy.stddev}};
    j["ber"] = {{"mean", r.ber.mean}, {"std", r.ber.stddev}};
}

} // namespace sevnet
