#pragma once

// Contingency tables, chi-square, Cramer's V over mixed column kinds and
// target-association feature selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "dataset.hpp"
#include "error.hpp"
#include "parallel.hpp"

namespace sevnet {

/// Category codes for one column: dense integers 0..m-1.
using Categories = std::vector<int>;

/// Equal-frequency binning. Interior edges sit at the empirical i/n_bins
/// quantiles (inverse-CDF definition, so every edge is an observed value); a
/// value equal to an edge falls in the lower bin. Empty bins are collapsed so
/// the returned codes are dense, and a constant column yields a single code.
inline Categories bin_numeric(std::span<const double> values, std::size_t n_bins) {
    if (n_bins < 2) throw config_error("InvalidArgument", "bin_numeric needs n_bins >= 2");
    if (values.empty()) throw data_error("EmptyInput", "bin_numeric needs at least one value");

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();

    std::vector<double> edges;
    for (std::size_t i = 1; i < n_bins; ++i) {
        // smallest k with (k+1)/n >= i/n_bins
        const std::size_t k = (i * n + n_bins - 1) / n_bins - 1;
        edges.push_back(sorted[k]);
    }

    Categories raw(values.size());
    for (std::size_t r = 0; r < values.size(); ++r)
        raw[r] = static_cast<int>(std::lower_bound(edges.begin(), edges.end(), values[r]) - edges.begin());

    std::vector<int> remap(n_bins, -1);
    for (int b : raw) remap[static_cast<std::size_t>(b)] = 0;
    int next = 0;
    for (auto& m : remap)
        if (m == 0) m = next++;
    for (auto& b : raw) b = remap[static_cast<std::size_t>(b)];
    return raw;
}

/// Dense codes in first-appearance order.
template <typename T>
Categories encode_categories(std::span<const T> values) {
    std::map<T, int> code;
    Categories out;
    out.reserve(values.size());
    for (const auto& v : values) {
        auto [it, inserted] = code.try_emplace(v, static_cast<int>(code.size()));
        out.push_back(it->second);
    }
    return out;
}

/// Categories for any column: numeric columns are quantile binned, text and
/// target columns are coded by first appearance.
inline Categories column_categories(const Column& column, std::size_t n_bins) {
    switch (column.kind) {
    case ColumnKind::Numeric: return bin_numeric(column.numbers, n_bins);
    case ColumnKind::Target: return encode_categories<int>(column.labels);
    default: return encode_categories<std::string>(column.text);
    }
}

struct ContingencyTable {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<std::int64_t>> counts; // rows x cols

    [[nodiscard]] std::size_t rows() const { return counts.size(); }
    [[nodiscard]] std::size_t cols() const { return counts.empty() ? 0 : counts.front().size(); }

    [[nodiscard]] std::int64_t total() const {
        std::int64_t n = 0;
        for (const auto& row : counts)
            for (auto v : row) n += v;
        return n;
    }

    /// Table from raw counts with index labels.
    static ContingencyTable from_counts(std::vector<std::vector<std::int64_t>> counts) {
        ContingencyTable t;
        t.counts = std::move(counts);
        for (std::size_t i = 0; i < t.rows(); ++i) t.row_labels.push_back(std::to_string(i));
        for (std::size_t j = 0; j < t.cols(); ++j) t.col_labels.push_back(std::to_string(j));
        return t;
    }
};

namespace detail {
template <typename T>
std::string label_text(const T& v) {
    if constexpr (std::is_convertible_v<T, std::string>)
        return std::string{v};
    else
        return std::to_string(v);
}
} // namespace detail

/// Cross-tabulates two equally long category arrays; labels keep first-appearance order.
template <typename A, typename B>
ContingencyTable build_contingency(std::span<const A> a, std::span<const B> b) {
    if (a.size() != b.size())
        throw data_error("LengthMismatch", "contingency inputs have lengths " + std::to_string(a.size()) + " and " +
                                               std::to_string(b.size()));
    if (a.empty()) throw data_error("EmptyInput", "contingency inputs are empty");

    std::map<A, std::size_t> row_index;
    std::map<B, std::size_t> col_index;
    ContingencyTable t;
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    cells.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto [ri, new_row] = row_index.try_emplace(a[i], row_index.size());
        if (new_row) t.row_labels.push_back(detail::label_text(a[i]));
        auto [ci, new_col] = col_index.try_emplace(b[i], col_index.size());
        if (new_col) t.col_labels.push_back(detail::label_text(b[i]));
        cells.emplace_back(ri->second, ci->second);
    }
    t.counts.assign(row_index.size(), std::vector<std::int64_t>(col_index.size(), 0));
    for (auto [r, c] : cells) ++t.counts[r][c];
    return t;
}

template <typename A, typename B>
ContingencyTable build_contingency(const std::vector<A>& a, const std::vector<B>& b) {
    return build_contingency(std::span<const A>(a), std::span<const B>(b));
}

/// Pearson chi-square against the independence expectation; cells whose
/// expected count is zero contribute nothing.
inline double chi_square(const ContingencyTable& t) {
    const std::size_t r = t.rows();
    const std::size_t c = t.cols();
    std::vector<double> row_total(r, 0.0);
    std::vector<double> col_total(c, 0.0);
    double n = 0.0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const auto v = static_cast<double>(t.counts[i][j]);
            row_total[i] += v;
            col_total[j] += v;
            n += v;
        }
    if (n <= 0.0) return 0.0;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const double expected = row_total[i] * col_total[j] / n;
            if (expected <= 0.0) continue;
            const double d = static_cast<double>(t.counts[i][j]) - expected;
            chi2 += d * d / expected;
        }
    return chi2;
}

/// Cramer's V in [0, 1]. A table with a single row or column has V = 0.
/// The bias-corrected variant shrinks phi^2 and the effective table shape
/// with the usual small-sample correction.
inline double cramers_v(const ContingencyTable& t, bool bias_corrected = false) {
    const auto r = static_cast<double>(t.rows());
    const auto c = static_cast<double>(t.cols());
    const auto n = static_cast<double>(t.total());
    if (std::min(r, c) <= 1.0 || n <= 0.0) return 0.0;
    const double phi2 = chi_square(t) / n;

    double v = 0.0;
    if (!bias_corrected) {
        v = std::sqrt(phi2 / (std::min(r, c) - 1.0));
    } else {
        if (n <= 1.0) return 0.0;
        const double phi2_corr = std::max(0.0, phi2 - (r - 1.0) * (c - 1.0) / (n - 1.0));
        const double r_corr = r - (r - 1.0) * (r - 1.0) / (n - 1.0);
        const double c_corr = c - (c - 1.0) * (c - 1.0) / (n - 1.0);
        const double denom = std::min(r_corr, c_corr) - 1.0;
        if (denom <= 0.0) return 0.0;
        v = std::sqrt(phi2_corr / denom);
    }
    return std::clamp(v, 0.0, 1.0);
}

struct AssociationMatrix {
    std::vector<std::string> labels;
    std::vector<double> values; // row-major m x m

    [[nodiscard]] std::size_t size() const { return labels.size(); }
    [[nodiscard]] double at(std::size_t i, std::size_t j) const { return values[i * labels.size() + j]; }
};

/// Pairwise Cramer's V over `columns` (all schema columns when empty). The
/// table must already be imputed. Pairs are evaluated on up to `jobs` threads.
inline AssociationMatrix association_matrix(const Table& table, std::size_t n_bins = 10, bool bias_corrected = false,
                                            std::vector<std::string> columns = {}, std::size_t jobs = 1) {
    if (table.missing_count() != 0)
        throw data_error("NotImputed", "association_matrix requires a table without missing cells");
    if (columns.empty())
        for (const auto& c : table.columns) columns.push_back(c.name);

    const std::size_t m = columns.size();
    std::vector<Categories> cats;
    cats.reserve(m);
    for (const auto& name : columns) cats.push_back(column_categories(table.column(name), n_bins));

    AssociationMatrix out;
    out.labels = columns;
    out.values.assign(m * m, 0.0);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) pairs.emplace_back(i, j);

    parallel_for(pairs.size(), jobs, [&](std::size_t p) {
        const auto [i, j] = pairs[p];
        const double v = cramers_v(build_contingency(cats[i], cats[j]), bias_corrected);
        out.values[i * m + j] = v;
        out.values[j * m + i] = v;
    });
    for (std::size_t i = 0; i < m; ++i) out.values[i * m + i] = 1.0;
    return out;
}

struct RankedFeature {
    std::string name;
    double association = 0.0;
};

struct SelectionReport {
    double threshold = 0.0;
    std::vector<RankedFeature> ranked;  // descending association, schema order on ties
    std::vector<std::string> selected;  // ranked entries with association >= threshold
};

inline void to_json(nlohmann::json& j, const SelectionReport& s) {
    j["threshold"] = s.threshold;
    j["ranked"] = nlohmann::json::array();
    for (const auto& r : s.ranked) j["ranked"].push_back({{"name", r.name}, {"cramers_v", r.association}});
    j["selected"] = s.selected;
}

inline void from_json(const nlohmann::json& j, SelectionReport& s) {
    s.threshold = j.at("threshold").get<double>();
    s.ranked.clear();
    for (const auto& r : j.at("ranked")) s.ranked.push_back({r.at("name").get<std::string>(), r.at("cramers_v").get<double>()});
    s.selected = j.at("selected").get<std::vector<std::string>>();
}

/// Ranks every non-target column by Cramer's V against the target and keeps
/// those at or above `threshold`.
inline SelectionReport select_features(const Table& table, double threshold, std::size_t n_bins = 10,
                                       bool bias_corrected = false) {
    const auto target = encode_categories<int>(table.target());
    SelectionReport report;
    report.threshold = threshold;
    for (const auto& col : table.columns) {
        if (col.kind == ColumnKind::Target) continue;
        const auto cats = column_categories(col, n_bins);
        report.ranked.push_back({col.name, cramers_v(build_contingency(cats, target), bias_corrected)});
    }
    std::stable_sort(report.ranked.begin(), report.ranked.end(),
                     [](const auto& a, const auto& b) { return a.association > b.association; });
    for (const auto& r : report.ranked)
        if (r.association >= threshold) report.selected.push_back(r.name);
    return report;
}

} // namespace sevnet
