#pragma once

// Confusion-matrix metrics: accuracy, per-class recall and balanced error rate.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"

namespace sevnet {

/// K x K counts; rows are true classes, columns predictions (both 1..K).
struct ConfusionMatrix {
    int classes = 0;
    std::vector<std::int64_t> counts; // row-major

    explicit ConfusionMatrix(int k = 0) : classes(k), counts(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0) {}

    std::int64_t& at(int truth, int predicted) {
        return counts[static_cast<std::size_t>(truth - 1) * static_cast<std::size_t>(classes) + static_cast<std::size_t>(predicted - 1)];
    }
    [[nodiscard]] std::int64_t at(int truth, int predicted) const {
        return counts[static_cast<std::size_t>(truth - 1) * static_cast<std::size_t>(classes) + static_cast<std::size_t>(predicted - 1)];
    }

    [[nodiscard]] std::int64_t total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

    [[nodiscard]] std::int64_t trace() const {
        std::int64_t t = 0;
        for (int c = 1; c <= classes; ++c) t += at(c, c);
        return t;
    }

    [[nodiscard]] std::int64_t row_total(int truth) const {
        std::int64_t t = 0;
        for (int p = 1; p <= classes; ++p) t += at(truth, p);
        return t;
    }

    bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const int> predicted, std::span<const int> truth, int K) {
    if (predicted.size() != truth.size()) throw data_error("LengthMismatch", "prediction and label counts differ");
    ConfusionMatrix cm(K);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 1 || truth[i] > K || predicted[i] < 1 || predicted[i] > K)
            throw data_error("LabelOutOfRange", "label out of 1.." + std::to_string(K) + " at row " + std::to_string(i));
        ++cm.at(truth[i], predicted[i]);
    }
    return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
    const auto n = cm.total();
    return n == 0 ? 0.0 : static_cast<double>(cm.trace()) / static_cast<double>(n);
}

/// Recall per class; NaN for classes with no true rows.
inline std::vector<double> per_class_recall(const ConfusionMatrix& cm) {
    std::vector<double> recall;
    for (int c = 1; c <= cm.classes; ++c) {
        const auto row = cm.row_total(c);
        recall.push_back(row == 0 ? std::numeric_limits<double>::quiet_NaN()
                                  : static_cast<double>(cm.at(c, c)) / static_cast<double>(row));
    }
    return recall;
}

/// 1 - mean recall over the classes that have at least one true row.
inline double ber(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw data_error("EmptyConfusion", "BER of an empty confusion matrix is undefined");
    double sum = 0.0;
    int represented = 0;
    for (double r : per_class_recall(cm)) {
        if (std::isnan(r)) continue;
        sum += r;
        ++represented;
    }
    return 1.0 - sum / represented;
}

struct MetricsReport {
    double accuracy = 0.0;
    std::vector<double> per_class_recall;  // NaN where a class is absent
    double ber = 0.0;
    ConfusionMatrix confusion;
    std::vector<int> absent_classes;       // classes excluded from the BER mean
};

inline MetricsReport evaluate(const ConfusionMatrix& cm) {
    MetricsReport r;
    r.confusion = cm;
    r.accuracy = accuracy(cm);
    r.per_class_recall = per_class_recall(cm);
    r.ber = ber(cm);
    for (int c = 1; c <= cm.classes; ++c)
        if (cm.row_total(c) == 0) r.absent_classes.push_back(c);
    return r;
}

inline MetricsReport evaluate(std::span<const int> predicted, std::span<const int> truth, int K) {
    return evaluate(confusion(predicted, truth, K));
}

inline void to_json(nlohmann::json& j, const ConfusionMatrix& cm) {
    j = nlohmann::json::array();
    for (int t = 1; t <= cm.classes; ++t) {
        auto row = nlohmann::json::array();
        for (int p = 1; p <= cm.classes; ++p) row.push_back(cm.at(t, p));
        j.push_back(std::move(row));
    }
}

inline void from_json(const nlohmann::json& j, ConfusionMatrix& cm) {
    cm = ConfusionMatrix(static_cast<int>(j.size()));
    for (int t = 1; t <= cm.classes; ++t)
        for (int p = 1; p <= cm.classes; ++p) cm.at(t, p) = j.at(static_cast<std::size_t>(t - 1)).at(static_cast<std::size_t>(p - 1)).get<std::int64_t>();
}

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
    auto recall = nlohmann::json::array();
    for (double v : r.per_class_recall) recall.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    j = {{"accuracy", r.accuracy},
         {"ber", r.ber},
         {"per_class_recall", recall},
         {"confusion", r.confusion},
         {"absent_classes", r.absent_classes}};
}

} // namespace sevnet
