#pragma once

// Schema-driven tabular data: ingestion, imputation, summaries and a
// deterministic synthetic generator for imbalanced multi-class data.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "csv.hpp"
#include "error.hpp"
#include "random.hpp"

namespace sevnet {

enum class ColumnKind { Numeric, Categorical, Boolean, Target };

inline std::string_view to_string(ColumnKind kind) {
    switch (kind) {
    case ColumnKind::Numeric: return "numeric";
    case ColumnKind::Categorical: return "categorical";
    case ColumnKind::Boolean: return "boolean";
    case ColumnKind::Target: return "target";
    }
    return "unknown";
}

inline ColumnKind parse_column_kind(std::string_view text) {
    if (text == "numeric") return ColumnKind::Numeric;
    if (text == "categorical") return ColumnKind::Categorical;
    if (text == "boolean") return ColumnKind::Boolean;
    if (text == "target") return ColumnKind::Target;
    throw config_error("InvalidSchema", "unknown column kind '" + std::string{text} + "'");
}

/// Categorical and Boolean columns both hold text and are one-hot encoded alike.
inline bool is_textual(ColumnKind kind) { return kind == ColumnKind::Categorical || kind == ColumnKind::Boolean; }

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
};

struct SchemaSpec {
    std::vector<ColumnSpec> columns;
    int target_cardinality = 2;

    /// Throws InvalidSchema unless names are unique, exactly one column is the
    /// target and K >= 2.
    void validate() const {
        if (target_cardinality < 2)
            throw config_error("InvalidSchema", "target_cardinality must be >= 2");
        std::unordered_set<std::string> seen;
        int targets = 0;
        for (const auto& c : columns) {
            if (!seen.insert(c.name).second)
                throw config_error("InvalidSchema", "duplicate column name '" + c.name + "'");
            targets += c.kind == ColumnKind::Target;
        }
        if (targets != 1)
            throw config_error("InvalidSchema", "schema must contain exactly one target column");
    }

    [[nodiscard]] std::size_t target_index() const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].kind == ColumnKind::Target) return i;
        throw config_error("InvalidSchema", "schema has no target column");
    }

    [[nodiscard]] std::optional<std::size_t> find(std::string_view name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].name == name) return i;
        return std::nullopt;
    }
};

inline void to_json(nlohmann::json& j, const SchemaSpec& s) {
    j = nlohmann::json::object();
    j["columns"] = nlohmann::json::array();
    for (const auto& c : s.columns)
        j["columns"].push_back({{"name", c.name}, {"kind", std::string{to_string(c.kind)}}});
    j["target_cardinality"] = s.target_cardinality;
}

inline void from_json(const nlohmann::json& j, SchemaSpec& s) {
    s.columns.clear();
    try {
        for (const auto& c : j.at("columns"))
            s.columns.push_back({c.at("name").get<std::string>(), parse_column_kind(c.at("kind").get<std::string>())});
        s.target_cardinality = j.at("target_cardinality").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error("InvalidSchema", std::string{"malformed schema: "} + e.what());
    }
    s.validate();
}

inline SchemaSpec load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("MissingFile", "cannot open schema file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw config_error("InvalidSchema", "schema '" + path + "' is not valid JSON: " + e.what());
    }
    return j.get<SchemaSpec>();
}

/// One column of a Table. Exactly one of the value vectors is populated,
/// selected by `kind`: `numbers` for Numeric, `text` for Categorical/Boolean,
/// `labels` (1..K) for Target.
struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<double> numbers;
    std::vector<std::string> text;
    std::vector<int> labels;
    std::vector<std::uint8_t> missing;
};

struct Table {
    SchemaSpec schema;
    std::vector<Column> columns;
    std::size_t n_rows = 0;
    std::size_t dropped_rows = 0; // rows discarded at ingestion for a missing target

    [[nodiscard]] const Column& column(std::string_view name) const {
        for (const auto& c : columns)
            if (c.name == name) return c;
        throw config_error("UnknownColumn", "no column named '" + std::string{name} + "'");
    }

    [[nodiscard]] const Column& target_column() const { return columns.at(schema.target_index()); }
    [[nodiscard]] const std::vector<int>& target() const { return target_column().labels; }
    [[nodiscard]] bool has_target() const { return !target_column().labels.empty() || n_rows == 0; }

    [[nodiscard]] std::size_t missing_count() const {
        std::size_t total = 0;
        for (const auto& c : columns) total += static_cast<std::size_t>(std::count(c.missing.begin(), c.missing.end(), 1));
        return total;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
    auto b = std::find_if(s.begin(), s.end(), not_space);
    auto e = std::find_if(s.rbegin(), std::string_view::reverse_iterator(b), not_space).base();
    return {b, static_cast<std::size_t>(e - b)};
}

inline std::optional<double> parse_number(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
    return value;
}

inline double median_of(std::vector<double> values) {
    const std::size_t n = values.size();
    const std::size_t mid = n / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double hi = values[mid];
    if (n % 2 == 1) return hi;
    const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

} // namespace detail

struct IngestOptions {
    /// When false the target column may be absent from the header (prediction
    /// input); rows with a blank target are then kept with label 0.
    bool require_target = true;
};

/// Parses a CSV stream against `schema`. Numeric cells that fail to parse are
/// marked missing, text cells are trimmed, and rows whose target is blank are
/// dropped and counted in `dropped_rows`.
inline Table ingest_csv(std::istream& in, const SchemaSpec& schema, const IngestOptions& options = {}) {
    schema.validate();
    csv::Reader reader(in);
    auto header = reader.next();
    if (!header) throw data_error("EmptyFile", "input has no header row");
    if (!header->empty() && header->front().rfind("\xEF\xBB\xBF", 0) == 0) header->front().erase(0, 3);

    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < header->size(); ++i) position.emplace(std::string{detail::trim((*header)[i])}, i);

    const std::size_t target_idx = schema.target_index();
    std::vector<std::optional<std::size_t>> source(schema.columns.size());
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        auto it = position.find(schema.columns[c].name);
        if (it != position.end()) {
            source[c] = it->second;
        } else if (c != target_idx || options.require_target) {
            throw data_error("MissingColumn", "header lacks column '" + schema.columns[c].name + "'");
        }
    }
    const bool target_present = source[target_idx].has_value();
    const int K = schema.target_cardinality;

    Table table;
    table.schema = schema;
    table.columns.resize(schema.columns.size());
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        table.columns[c].name = schema.columns[c].name;
        table.columns[c].kind = schema.columns[c].kind;
    }

    std::size_t record_no = 0;
    while (auto record = reader.next()) {
        ++record_no;
        const auto cell = [&](std::size_t c) -> std::string_view {
            const auto idx = *source[c];
            return idx < record->size() ? detail::trim((*record)[idx]) : std::string_view{};
        };

        int label = 0;
        if (target_present) {
            const auto raw = cell(target_idx);
            if (raw.empty()) {
                if (options.require_target) {
                    ++table.dropped_rows;
                    continue;
                }
            } else {
                const auto value = detail::parse_number(raw);
                if (!value || *value != std::floor(*value) || *value < 1 || *value > K)
                    throw data_error("TargetOutOfRange", "row " + std::to_string(record_no) + ": target '" +
                                                             std::string{raw} + "' not in 1.." + std::to_string(K));
                label = static_cast<int>(*value);
            }
        }

        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            auto& col = table.columns[c];
            switch (col.kind) {
            case ColumnKind::Target:
                if (target_present) col.labels.push_back(label);
                col.missing.push_back(0);
                break;
            case ColumnKind::Numeric: {
                const auto value = detail::parse_number(cell(c));
                col.numbers.push_back(value.value_or(0.0));
                col.missing.push_back(value ? 0 : 1);
                break;
            }
            case ColumnKind::Categorical:
            case ColumnKind::Boolean: {
                const auto raw = cell(c);
                col.text.emplace_back(raw);
                col.missing.push_back(raw.empty() ? 1 : 0);
                break;
            }
            }
        }
        ++table.n_rows;
    }
    return table;
}

inline Table ingest_csv(const std::string& path, const SchemaSpec& schema, const IngestOptions& options = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("MissingFile", "cannot open data file '" + path + "'");
    return ingest_csv(in, schema, options);
}

/// Per-column fill values learned from observed cells.
struct Imputation {
    std::map<std::string, double> numeric_fill;   // column median
    std::string category_fill = "Unknown";
};

inline Imputation fit_imputation(const Table& table) {
    Imputation imp;
    for (const auto& col : table.columns) {
        if (col.kind != ColumnKind::Numeric) continue;
        std::vector<double> observed;
        observed.reserve(col.numbers.size());
        for (std::size_t i = 0; i < col.numbers.size(); ++i)
            if (!col.missing[i]) observed.push_back(col.numbers[i]);
        if (observed.empty())
            throw data_error("AllMissingColumn", "numeric column '" + col.name + "' has no observed values");
        imp.numeric_fill[col.name] = detail::median_of(std::move(observed));
    }
    return imp;
}

inline Table apply_imputation(Table table, const Imputation& imp) {
    for (auto& col : table.columns) {
        for (std::size_t i = 0; i < col.missing.size(); ++i) {
            if (!col.missing[i]) continue;
            if (col.kind == ColumnKind::Numeric) {
                auto it = imp.numeric_fill.find(col.name);
                if (it == imp.numeric_fill.end())
                    throw data_error("AllMissingColumn", "no fill value for numeric column '" + col.name + "'");
                col.numbers[i] = it->second;
            } else if (is_textual(col.kind)) {
                col.text[i] = imp.category_fill;
            }
            col.missing[i] = 0;
        }
    }
    return table;
}

/// Numeric gaps take the column median, text gaps the category "Unknown".
inline Table impute(const Table& table) { return apply_imputation(table, fit_imputation(table)); }

/// Row subset in the given order.
inline Table take_rows(const Table& table, std::span<const std::size_t> rows) {
    Table out;
    out.schema = table.schema;
    out.n_rows = rows.size();
    out.columns.reserve(table.columns.size());
    for (const auto& col : table.columns) {
        Column c;
        c.name = col.name;
        c.kind = col.kind;
        for (std::size_t r : rows) {
            if (!col.numbers.empty()) c.numbers.push_back(col.numbers[r]);
            if (!col.text.empty()) c.text.push_back(col.text[r]);
            if (!col.labels.empty()) c.labels.push_back(col.labels[r]);
            c.missing.push_back(col.missing[r]);
        }
        out.columns.push_back(std::move(c));
    }
    return out;
}

inline std::vector<double> class_distribution(std::span<const int> labels, int K) {
    std::vector<double> p(static_cast<std::size_t>(K), 0.0);
    if (labels.empty()) return p;
    std::vector<std::size_t> counts(static_cast<std::size_t>(K), 0);
    for (int y : labels) ++counts.at(static_cast<std::size_t>(y - 1));
    for (std::size_t c = 0; c < counts.size(); ++c)
        p[c] = static_cast<double>(counts[c]) / static_cast<double>(labels.size());
    return p;
}

inline std::vector<double> class_distribution(const Table& table) {
    return class_distribution(table.target(), table.schema.target_cardinality);
}

/// Splits `total` into integer parts proportional to `weights` (largest
/// remainder; equal remainders go to the lower index).
inline std::vector<std::size_t> largest_remainder(std::size_t total, std::span<const double> weights) {
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> parts(weights.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(total) * weights[i] / sum;
        parts[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += parts[i];
        remainders.emplace_back(exact - static_cast<double>(parts[i]), i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k, ++assigned) ++parts[remainders[k].second];
    return parts;
}

struct SyntheticSpec {
    std::size_t n_rows = 1000;
    std::vector<double> class_proportions{0.25, 0.25, 0.25, 0.25};
    std::size_t n_numeric = 4;
    std::size_t n_categorical = 2;
    double mean_shift = 1.0;        // scale of the per-class numeric mean offsets
    std::size_t n_categories = 5;   // levels per categorical column
    double category_skew = 0.5;     // extra mass on each class's preferred level
    std::uint64_t seed = 0;

    void validate() const {
        if (class_proportions.size() < 2)
            throw config_error("InvalidProportions", "need at least two classes");
        double sum = 0.0;
        for (double p : class_proportions) {
            if (!(p > 0.0)) throw config_error("InvalidProportions", "class proportions must be strictly positive");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw config_error("InvalidProportions", "class proportions must sum to 1");
        if (n_rows == 0) throw config_error("InvalidProportions", "n_rows must be positive");
        if (n_categorical > 0 && n_categories < 2) throw config_error("InvalidSpec", "n_categories must be >= 2");
        if (category_skew < 0.0 || category_skew > 1.0) throw config_error("InvalidSpec", "category_skew must lie in [0,1]");
    }
};

inline void to_json(nlohmann::json& j, const SyntheticSpec& s) {
    j = {{"n_rows", s.n_rows},         {"class_proportions", s.class_proportions},
         {"n_numeric", s.n_numeric},   {"n_categorical", s.n_categorical},
         {"mean_shift", s.mean_shift}, {"n_categories", s.n_categories},
         {"category_skew", s.category_skew}, {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticSpec& s) {
    SyntheticSpec d;
    s.n_rows = j.value("n_rows", d.n_rows);
    s.class_proportions = j.value("class_proportions", d.class_proportions);
    s.n_numeric = j.value("n_numeric", d.n_numeric);
    s.n_categorical = j.value("n_categorical", d.n_categorical);
    s.mean_shift = j.value("mean_shift", d.mean_shift);
    s.n_categories = j.value("n_categories", d.n_categories);
    s.category_skew = j.value("category_skew", d.category_skew);
    s.seed = j.value("seed", d.seed);
}

/// Schema used by generate_synthetic: num0.., cat0.., then "Severity".
inline SchemaSpec synthetic_schema(const SyntheticSpec& spec) {
    SchemaSpec schema;
    for (std::size_t j = 0; j < spec.n_numeric; ++j) schema.columns.push_back({"num" + std::to_string(j), ColumnKind::Numeric});
    for (std::size_t j = 0; j < spec.n_categorical; ++j)
        schema.columns.push_back({"cat" + std::to_string(j), ColumnKind::Categorical});
    schema.columns.push_back({"Severity", ColumnKind::Target});
    schema.target_cardinality = static_cast<int>(spec.class_proportions.size());
    return schema;
}

/// Deterministic imbalanced data. Class counts are the largest-remainder
/// rounding of n_rows * proportions; each class has its own numeric mean
/// vector (mean_shift * N(0,1) per feature) and its own preferred level in
/// every categorical column.
inline Table generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t K = spec.class_proportions.size();
    const auto counts = largest_remainder(spec.n_rows, spec.class_proportions);

    std::vector<int> labels;
    labels.reserve(spec.n_rows);
    for (std::size_t c = 0; c < K; ++c) labels.insert(labels.end(), counts[c], static_cast<int>(c + 1));
    Rng order_rng(derive_seed(spec.seed, "synthetic.order"));
    order_rng.shuffle(std::span<int>(labels));

    Rng shape_rng(derive_seed(spec.seed, "synthetic.shape"));
    std::vector<std::vector<double>> means(K, std::vector<double>(spec.n_numeric));
    for (auto& row : means)
        for (auto& m : row) m = spec.mean_shift * shape_rng.normal();
    std::vector<std::vector<std::size_t>> preferred(K, std::vector<std::size_t>(spec.n_categorical));
    for (auto& row : preferred)
        for (auto& p : row) p = static_cast<std::size_t>(shape_rng.below(spec.n_categories));

    Table table;
    table.schema = synthetic_schema(spec);
    table.n_rows = spec.n_rows;
    for (const auto& cs : table.schema.columns) {
        Column col;
        col.name = cs.name;
        col.kind = cs.kind;
        col.missing.assign(spec.n_rows, 0);
        table.columns.push_back(std::move(col));
    }

    Rng value_rng(derive_seed(spec.seed, "synthetic.values"));
    for (std::size_t i = 0; i < spec.n_rows; ++i) {
        const auto c = static_cast<std::size_t>(labels[i] - 1);
        for (std::size_t j = 0; j < spec.n_numeric; ++j)
            table.columns[j].numbers.push_back(means[c][j] + value_rng.normal());
        for (std::size_t j = 0; j < spec.n_categorical; ++j) {
            std::size_t level = preferred[c][j];
            if (!value_rng.bernoulli(spec.category_skew)) level = static_cast<std::size_t>(value_rng.below(spec.n_categories));
            table.columns[spec.n_numeric + j].text.push_back("v" + std::to_string(level));
        }
    }
    table.columns.back().labels = std::move(labels);
    return table;
}

/// Writes a table back out as CSV in schema column order (missing cells blank).
inline void write_csv(std::ostream& out, const Table& table) {
    csv::Record header;
    for (const auto& c : table.columns) header.push_back(c.name);
    csv::write_record(out, header);
    std::ostringstream num;
    num.precision(17);
    for (std::size_t i = 0; i < table.n_rows; ++i) {
        csv::Record rec;
        for (const auto& c : table.columns) {
            if (c.missing[i]) {
                rec.emplace_back();
            } else if (c.kind == ColumnKind::Numeric) {
                num.str({});
                num << c.numbers[i];
                rec.push_back(num.str());
            } else if (c.kind == ColumnKind::Target) {
                rec.push_back(c.labels.empty() ? std::string{} : std::to_string(c.labels[i]));
            } else {
                rec.push_back(c.text[i]);
            }
        }
        csv::write_record(out, rec);
    }
}

/// Plot-ready summary: per-column kind and missing rate, plus top-10 level
/// counts (text) or min/median/max (numeric), and the class distribution.
inline nlohmann::json summarize(const Table& table) {
    nlohmann::json out;
    out["n_rows"] = table.n_rows;
    out["dropped_rows"] = table.dropped_rows;
    if (table.has_target()) out["class_distribution"] = class_distribution(table);
    out["columns"] = nlohmann::json::array();
    for (const auto& col : table.columns) {
        nlohmann::json c;
        c["name"] = col.name;
        c["kind"] = std::string{to_string(col.kind)};
        const auto n_missing = static_cast<double>(std::count(col.missing.begin(), col.missing.end(), 1));
        c["missing_rate"] = table.n_rows ? n_missing / static_cast<double>(table.n_rows) : 0.0;
        if (col.kind == ColumnKind::Numeric) {
            std::vector<double> observed;
            for (std::size_t i = 0; i < col.numbers.size(); ++i)
                if (!col.missing[i]) observed.push_back(col.numbers[i]);
            if (!observed.empty()) {
                const auto [lo, hi] = std::minmax_element(observed.begin(), observed.end());
                c["min"] = *lo;
                c["max"] = *hi;
                c["median"] = detail::median_of(observed);
            }
        } else {
            std::map<std::string, std::size_t> counts;
            if (col.kind == ColumnKind::Target) {
                for (int y : col.labels) ++counts[std::to_string(y)];
            } else {
                for (std::size_t i = 0; i < col.text.size(); ++i)
                    if (!col.missing[i]) ++counts[col.text[i]];
            }
            std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
            std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
            if (ranked.size() > 10) ranked.resize(10);
            c["distinct"] = counts.size();
            c["top"] = nlohmann::json::array();
            for (const auto& [level, n] : ranked) c["top"].push_back({{"value", level}, {"count", n}});
        }
        out["columns"].push_back(std::move(c));
    }
    return out;
}

} // namespace sevnet
