#pragma once

// Fit/transform encoders, dense feature assembly and seeded stratified splits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "dataset.hpp"
#include "error.hpp"
#include "random.hpp"

namespace sevnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Dense design matrix with one label per column ("Start_Lat", "City=Houston").
struct FeatureMatrix {
    Matrix values;
    std::vector<std::string> labels;

    [[nodiscard]] std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    [[nodiscard]] std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

/// Copies the listed rows, in order.
inline Matrix take_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

inline FeatureMatrix take_rows(const FeatureMatrix& fm, std::span<const std::size_t> rows) {
    return {take_rows(fm.values, rows), fm.labels};
}

template <typename T>
std::vector<T> take_rows(const std::vector<T>& v, std::span<const std::size_t> rows) {
    std::vector<T> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(v[r]);
    return out;
}

namespace detail {

inline std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

inline const Column& checked_column(const Table& table, const std::string& name, bool want_text) {
    for (const auto& c : table.columns) {
        if (c.name != name) continue;
        if (want_text ? !is_textual(c.kind) : c.kind != ColumnKind::Numeric)
            throw config_error("UnknownColumn", "column '" + name + "' is not " + (want_text ? "categorical" : "numeric"));
        return c;
    }
    throw config_error("UnknownColumn", "no column named '" + name + "'");
}

} // namespace detail

struct OneHotCodec {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> categories; // per column, first-appearance order

    [[nodiscard]] std::size_t width(std::size_t k) const { return categories[k].size(); }
    [[nodiscard]] std::size_t width() const {
        std::size_t w = 0;
        for (const auto& c : categories) w += c.size();
        return w;
    }
};

/// Learns category lists from `rows` (all rows when empty).
inline OneHotCodec fit_one_hot(const Table& table, const std::vector<std::string>& columns,
                               std::span<const std::size_t> rows = {}) {
    const auto every = rows.empty() ? detail::all_rows(table.n_rows) : std::vector<std::size_t>{};
    if (rows.empty()) rows = every;
    OneHotCodec codec;
    for (const auto& name : columns) {
        const auto& col = detail::checked_column(table, name, true);
        std::vector<std::string> cats;
        std::map<std::string, bool> seen;
        for (auto r : rows)
            if (seen.try_emplace(col.text[r], true).second) cats.push_back(col.text[r]);
        codec.columns.push_back(name);
        codec.categories.push_back(std::move(cats));
    }
    return codec;
}

struct OneHotBlock {
    Matrix values;
    std::size_t unseen_cells = 0; // cells whose category was not learned at fit time
};

/// Known categories map to unit vectors, unseen ones to all-zero blocks.
inline OneHotBlock transform_one_hot(const OneHotCodec& codec, const Table& table) {
    OneHotBlock out;
    out.values = Matrix::Zero(static_cast<Eigen::Index>(table.n_rows), static_cast<Eigen::Index>(codec.width()));
    Eigen::Index offset = 0;
    for (std::size_t k = 0; k < codec.columns.size(); ++k) {
        const auto& col = detail::checked_column(table, codec.columns[k], true);
        std::map<std::string, Eigen::Index> index;
        for (std::size_t c = 0; c < codec.categories[k].size(); ++c)
            index.emplace(codec.categories[k][c], static_cast<Eigen::Index>(c));
        for (std::size_t r = 0; r < table.n_rows; ++r) {
            auto it = index.find(col.text[r]);
            if (it == index.end()) {
                ++out.unseen_cells;
                continue;
            }
            out.values(static_cast<Eigen::Index>(r), offset + it->second) = 1.0;
        }
        offset += static_cast<Eigen::Index>(codec.categories[k].size());
    }
    return out;
}

struct Standardizer {
    std::vector<std::string> columns;
    std::vector<double> mean;
    std::vector<double> stddev; // population (1/n)
};

inline Standardizer fit_standardizer(const Table& table, const std::vector<std::string>& columns,
                                     std::span<const std::size_t> rows = {}) {
    const auto every = rows.empty() ? detail::all_rows(table.n_rows) : std::vector<std::size_t>{};
    if (rows.empty()) rows = every;
    Standardizer s;
    for (const auto& name : columns) {
        const auto& col = detail::checked_column(table, name, false);
        double mean = 0.0;
        for (auto r : rows) mean += col.numbers[r];
        mean /= rows.empty() ? 1.0 : static_cast<double>(rows.size());
        double var = 0.0;
        for (auto r : rows) var += (col.numbers[r] - mean) * (col.numbers[r] - mean);
        var /= rows.empty() ? 1.0 : static_cast<double>(rows.size());
        s.columns.push_back(name);
        s.mean.push_back(mean);
        s.stddev.push_back(std::sqrt(var));
    }
    return s;
}

/// z = (x - mean) / std; zero-variance columns map to 0.
inline Matrix transform_standardize(const Standardizer& s, const Table& table) {
    Matrix out(static_cast<Eigen::Index>(table.n_rows), static_cast<Eigen::Index>(s.columns.size()));
    for (std::size_t k = 0; k < s.columns.size(); ++k) {
        const auto& col = detail::checked_column(table, s.columns[k], false);
        for (std::size_t r = 0; r < table.n_rows; ++r)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
                s.stddev[k] > 0.0 ? (col.numbers[r] - s.mean[k]) / s.stddev[k] : 0.0;
    }
    return out;
}

/// `names` reordered to follow the table's schema.
inline std::vector<std::string> schema_order(const SchemaSpec& schema, const std::vector<std::string>& names) {
    std::vector<std::string> out;
    for (const auto& c : schema.columns)
        if (std::find(names.begin(), names.end(), c.name) != names.end()) out.push_back(c.name);
    return out;
}

struct AssembledFeatures {
    FeatureMatrix features;
    std::size_t unseen_cells = 0;
};

/// Concatenates standardized numeric columns and one-hot blocks following
/// `column_order`. Every listed column must be covered by exactly one encoder.
inline AssembledFeatures assemble(const Table& table, const OneHotCodec& codec, const Standardizer& scaler,
                                  const std::vector<std::string>& column_order) {
    if (table.missing_count() != 0) throw data_error("NotImputed", "assemble requires a table without missing cells");
    const auto block = transform_one_hot(codec, table);
    const Matrix numeric = transform_standardize(scaler, table);

    std::vector<Eigen::Index> one_hot_offset(codec.columns.size());
    Eigen::Index off = 0;
    for (std::size_t k = 0; k < codec.columns.size(); ++k) {
        one_hot_offset[k] = off;
        off += static_cast<Eigen::Index>(codec.width(k));
    }

    if (column_order.size() != codec.columns.size() + scaler.columns.size())
        throw config_error("DimensionMismatch", "column order does not match the fitted encoders");

    AssembledFeatures out;
    out.unseen_cells = block.unseen_cells;
    const auto width = static_cast<Eigen::Index>(codec.width() + scaler.columns.size());
    out.features.values.resize(static_cast<Eigen::Index>(table.n_rows), width);
    Eigen::Index at = 0;
    for (const auto& name : column_order) {
        const auto num = std::find(scaler.columns.begin(), scaler.columns.end(), name);
        const auto cat = std::find(codec.columns.begin(), codec.columns.end(), name);
        if ((num != scaler.columns.end()) == (cat != codec.columns.end()))
            throw config_error("DimensionMismatch", "column '" + name + "' must be fitted by exactly one encoder");
        if (num != scaler.columns.end()) {
            out.features.values.col(at++) = numeric.col(num - scaler.columns.begin());
            out.features.labels.push_back(name);
        } else {
            const auto k = static_cast<std::size_t>(cat - codec.columns.begin());
            const auto w = static_cast<Eigen::Index>(codec.width(k));
            out.features.values.middleCols(at, w) = block.values.middleCols(one_hot_offset[k], w);
            for (const auto& level : codec.categories[k]) out.features.labels.push_back(name + "=" + level);
            at += w;
        }
    }
    return out;
}

/// Everything needed to turn a raw table into model input: the chosen
/// columns, fill values, and the fitted encoders.
struct FeaturePipeline {
    std::vector<std::string> columns; // schema order
    Imputation imputation;
    OneHotCodec codec;
    Standardizer scaler;

    /// Fits on `train_rows` of an already imputed table.
    static FeaturePipeline fit(const Table& imputed, const Imputation& imputation,
                               const std::vector<std::string>& selected, std::span<const std::size_t> train_rows) {
        FeaturePipeline p;
        p.columns = schema_order(imputed.schema, selected);
        if (p.columns.size() != selected.size())
            throw config_error("UnknownColumn", "selection names a column absent from the schema");
        p.imputation = imputation;
        std::vector<std::string> text;
        std::vector<std::string> numeric;
        for (const auto& name : p.columns) {
            const auto& col = imputed.column(name);
            if (col.kind == ColumnKind::Numeric) numeric.push_back(name);
            else if (is_textual(col.kind)) text.push_back(name);
            else throw config_error("UnknownColumn", "the target cannot be a feature");
        }
        p.codec = fit_one_hot(imputed, text, train_rows);
        p.scaler = fit_standardizer(imputed, numeric, train_rows);
        return p;
    }

    [[nodiscard]] AssembledFeatures transform(const Table& raw) const {
        return assemble(apply_imputation(raw, imputation), codec, scaler, columns);
    }
};

inline void to_json(nlohmann::json& j, const FeaturePipeline& p) {
    j["columns"] = p.columns;
    j["imputation"] = {{"numeric_fill", p.imputation.numeric_fill}, {"category_fill", p.imputation.category_fill}};
    j["one_hot"] = {{"columns", p.codec.columns}, {"categories", p.codec.categories}};
    j["standardizer"] = {{"columns", p.scaler.columns}, {"mean", p.scaler.mean}, {"stddev", p.scaler.stddev}};
}

inline void from_json(const nlohmann::json& j, FeaturePipeline& p) {
    p.columns = j.at("columns").get<std::vector<std::string>>();
    p.imputation.numeric_fill = j.at("imputation").at("numeric_fill").get<std::map<std::string, double>>();
    p.imputation.category_fill = j.at("imputation").at("category_fill").get<std::string>();
    p.codec.columns = j.at("one_hot").at("columns").get<std::vector<std::string>>();
    p.codec.categories = j.at("one_hot").at("categories").get<std::vector<std::vector<std::string>>>();
    p.scaler.columns = j.at("standardizer").at("columns").get<std::vector<std::string>>();
    p.scaler.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    p.scaler.stddev = j.at("standardizer").at("stddev").get<std::vector<double>>();
}

/// Seeded stratified partition of row indices into parts sized by `ratios`.
/// Within each class the rows are shuffled and cut by largest-remainder
/// rounding; if a class has at least as many rows as there are parts, every
/// part receives at least one of them. Each part is returned sorted.
inline std::vector<std::vector<std::size_t>> stratified_partition(std::span<const int> labels,
                                                                  std::span<const double> ratios, std::uint64_t seed) {
    if (labels.empty()) throw data_error("EmptyInput", "cannot split an empty label array");
    if (ratios.empty()) throw config_error("InvalidRatios", "no split ratios given");
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) throw config_error("InvalidRatios", "split ratios must be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw config_error("InvalidRatios", "split ratios must sum to 1");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

    std::vector<std::vector<std::size_t>> parts(ratios.size());
    for (auto& [label, rows] : by_class) {
        Rng rng(derive_seed(seed, "stratified_partition", static_cast<std::uint64_t>(static_cast<std::int64_t>(label))));
        rng.shuffle(std::span<std::size_t>(rows));
        auto sizes = largest_remainder(rows.size(), ratios);
        if (rows.size() >= ratios.size()) {
            for (auto& s : sizes) {
                if (s != 0) continue;
                auto donor = std::max_element(sizes.begin(), sizes.end());
                --*donor;
                s = 1;
            }
        }
        std::size_t at = 0;
        for (std::size_t p = 0; p < parts.size(); ++p)
            for (std::size_t k = 0; k < sizes[p]; ++k) parts[p].push_back(rows[at++]);
    }
    for (auto& p : parts) std::sort(p.begin(), p.end());
    return parts;
}

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const SplitIndices& s) {
    j = {{"seed", s.seed}, {"train", s.train}, {"val", s.val}, {"test", s.test}};
}

inline void from_json(const nlohmann::json& j, SplitIndices& s) {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train = j.at("train").get<std::vector<std::size_t>>();
    s.val = j.at("val").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
}

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

inline SplitIndices stratified_split(std::span<const int> labels, SplitRatios ratios, std::uint64_t seed) {
    const std::vector<double> r{ratios.train, ratios.val, ratios.test};
    auto parts = stratified_partition(labels, r, seed);
    return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2]), seed};
}

/// Fold id (0..k-1) per row. Each class is shuffled and dealt round-robin,
/// continuing the rotation across classes, so every class is spread within
/// one row of k-way proportional and fold sizes differ by at most one.
inline std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw config_error("InvalidArgument", "k-fold needs k >= 2");
    if (labels.empty()) throw data_error("EmptyInput", "cannot fold an empty label array");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    std::vector<std::size_t> fold(labels.size());
    std::size_t dealt = 0;
    for (auto& [label, rows] : by_class) {
        Rng rng(derive_seed(seed, "stratified_folds", static_cast<std::uint64_t>(static_cast<std::int64_t>(label))));
        rng.shuffle(std::span<std::size_t>(rows));
        for (auto r : rows) fold[r] = dealt++ % k;
    }
    return fold;
}

} // namespace sevnet
