#pragma once

// Exhaustive hyperparameter search over the classifier grid.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "metrics.hpp"
#include "models.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace sevnet {

struct GridSpec {
    std::vector<std::size_t> initial_neurons{1218, 2436, 3654};
    std::vector<double> initial_dropout{0.2, 0.3, 0.4};
    std::vector<std::size_t> batch_size{2000, 5000, 10000};
    std::vector<double> l2_penalty{0.001, 0.0001};

    [[nodiscard]] std::size_t size() const {
        return initial_neurons.size() * initial_dropout.size() * batch_size.size() * l2_penalty.size();
    }

    /// Cartesian product, neurons outermost and l2 innermost, on top of `base`.
    [[nodiscard]] std::vector<ClassifierConfig> cells(const ClassifierConfig& base) const {
        std::vector<ClassifierConfig> out;
        for (auto n : initial_neurons)
            for (auto d : initial_dropout)
                for (auto b : batch_size)
                    for (auto l2 : l2_penalty) {
                        ClassifierConfig c = base;
                        c.initial_neurons = n;
                        c.initial_dropout = d;
                        c.batch_size = b;
                        c.l2_penalty = l2;
                        out.push_back(c);
                    }
        return out;
    }
};

inline void to_json(nlohmann::json& j, const GridSpec& g) {
    j = {{"initial_neurons", g.initial_neurons}, {"initial_dropout", g.initial_dropout},
         {"batch_size", g.batch_size}, {"l2_penalty", g.l2_penalty}};
}

inline void from_json(const nlohmann::json& j, GridSpec& g) {
    const GridSpec d;
    g.initial_neurons = j.value("initial_neurons", d.initial_neurons);
    g.initial_dropout = j.value("initial_dropout", d.initial_dropout);
    g.batch_size = j.value("batch_size", d.batch_size);
    g.l2_penalty = j.value("l2_penalty", d.l2_penalty);
}

struct GridCell {
    std::size_t index = 0;      // enumeration order
    ClassifierConfig config;    // includes the cell seed
    MetricsReport validation;
    std::size_t best_epoch = 0;
};

struct GridReport {
    std::vector<GridCell> cells;     // enumeration order
    std::vector<std::size_t> ranking; // cell indices, best first

    [[nodiscard]] const GridCell& best() const { return cells.at(ranking.at(0)); }
};

/// Seed for a cell, derived from its hyperparameter values so that duplicated
/// grid values give identical runs.
inline std::uint64_t grid_cell_seed(std::uint64_t master, const ClassifierConfig& c) {
    std::ostringstream key;
    key.precision(17);
    key << "grid.cell/" << c.initial_neurons << '/' << c.initial_dropout << '/' << c.batch_size << '/' << c.l2_penalty;
    return derive_seed(master, key.str());
}

/// Trains one classifier per grid cell on the train split and scores it on
/// the validation split. Ranked by validation BER, then higher accuracy, then
/// enumeration order.
inline GridReport grid_search(const GridSpec& grid, const ClassifierConfig& base, const Matrix& train_x,
                              std::span<const int> train_y, const Matrix& val_x, std::span<const int> val_y, int K,
                              std::uint64_t seed, std::size_t jobs = 1) {
    if (grid.size() == 0) throw config_error("InvalidGrid", "every grid list needs at least one value");
    std::optional<ClassWeights> weights;
    if (base.use_class_weights) weights = compute_class_weights(train_y, K);

    GridReport report;
    const auto configs = grid.cells(base);
    report.cells.resize(configs.size());
    parallel_for(configs.size(), jobs, [&](std::size_t i) {
        ClassifierConfig cfg = configs[i];
        cfg.seed = grid_cell_seed(seed, cfg);
        const auto model = train_classifier(cfg, train_x, train_y, val_x, val_y, K, weights);
        report.cells[i] = {i, cfg, evaluate(model.predict(val_x), val_y, K), model.best_epoch};
    });

    report.ranking.resize(report.cells.size());
    std::iota(report.ranking.begin(), report.ranking.end(), std::size_t{0});
    std::stable_sort(report.ranking.begin(), report.ranking.end(), [&](std::size_t a, std::size_t b) {
        const auto& x = report.cells[a].validation;
        const auto& y = report.cells[b].validation;
        if (x.ber != y.ber) return x.ber < y.ber;
        return x.accuracy > y.accuracy;
    });
    return report;
}

inline void to_json(nlohmann::json& j, const GridCell& c) {
    j = {{"index", c.index}, {"config", c.config}, {"validation", c.validation}, {"best_epoch", c.best_epoch}};
}

inline void to_json(nlohmann::json& j, const GridReport& r) {
    j["cells"] = r.cells;
    j["ranking"] = r.ranking;
    j["best"] = r.cells.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.best());
}

} // namespace sevnet
