#pragma once

// Subcommand layer behind the `sevnet` executable. Stages talk to each other
// only through files in the work directory.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "association.hpp"
#include "cross_validation.hpp"
#include "dataset.hpp"
#include "grid_search.hpp"
#include "io.hpp"
#include "models.hpp"
#include "preprocess.hpp"

namespace sevnet::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Every accepted key with its default. User config files and `--set` may
/// only touch keys that appear here.
inline json default_config() {
    json ae = AutoencoderConfig{};
    ae.erase("input_dim");
    ae.erase("seed");
    json clf = ClassifierConfig{};
    clf.erase("seed");
    json synth = SyntheticSpec{};
    synth.erase("seed");
    synth["n_rows"] = 5000;
    synth["class_proportions"] = {0.005, 0.70, 0.27, 0.025};
    return {
        {"seed", 42},
        {"jobs", 1},
        {"paths", {{"data", ""}, {"schema", ""}, {"work_dir", "work"}}},
        {"association", {{"n_bins", 10}, {"threshold", 0.2}, {"bias_corrected", false}}},
        {"split", {{"train", 0.6}, {"val", 0.2}, {"test", 0.2}}},
        {"use_autoencoder", true},
        {"autoencoder", ae},
        {"classifier", clf},
        {"grid", GridSpec{}},
        {"cv", {{"k", 10}}},
        {"synth", synth},
        {"predict", {{"input", ""}, {"output", ""}}},
    };
}

namespace detail {

inline void check_known(const json& defaults, const json& user, const std::string& prefix) {
    for (auto it = user.begin(); it != user.end(); ++it) {
        const auto key = prefix + it.key();
        if (!defaults.contains(it.key())) throw config_error("UnknownKey", "unknown config key '" + key + "'");
        const auto& d = defaults.at(it.key());
        if (d.is_object()) {
            if (!it.value().is_object()) throw config_error("InvalidConfig", "'" + key + "' must be an object");
            check_known(d, it.value(), key + ".");
        }
    }
}

} // namespace detail

/// `key.path=value`; the value is read as JSON when it parses, else as a string.
inline void apply_set(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw config_error("InvalidOverride", "expected key=value, got '" + assignment + "'");
    const auto key = assignment.substr(0, eq);
    const auto text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    const auto defaults = default_config();
    const json* d = &defaults;
    json* node = &config;
    std::istringstream parts(key);
    std::string part;
    std::vector<std::string> path;
    while (std::getline(parts, part, '.')) path.push_back(part);
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (!d->is_object() || !d->contains(path[i])) throw config_error("UnknownKey", "unknown config key '" + key + "'");
        d = &d->at(path[i]);
        node = &(*node)[path[i]];
    }
    if (d->is_object()) throw config_error("InvalidOverride", "'" + key + "' is not a scalar");
    *node = std::move(value);
}

struct Overrides {
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<std::string> work_dir;
    bool no_class_weights = false;
};

/// Defaults, then the config file, then `--set`, then the dedicated flags.
inline json resolve_config(const std::optional<fs::path>& file, const Overrides& o = {}) {
    json config = default_config();
    if (file) {
        std::ifstream in(*file);
        if (!in) throw config_error("MissingFile", "cannot open config '" + file->string() + "'");
        json user = json::parse(in, nullptr, false);
        if (user.is_discarded() || !user.is_object())
            throw config_error("InvalidConfig", "config '" + file->string() + "' is not a JSON object");
        detail::check_known(config, user, "");
        config.merge_patch(user);
    }
    for (const auto& s : o.sets) apply_set(config, s);
    if (o.seed) config["seed"] = *o.seed;
    if (o.jobs) config["jobs"] = *o.jobs;
    if (o.work_dir) config["paths"]["work_dir"] = *o.work_dir;
    if (o.no_class_weights) config["classifier"]["use_class_weights"] = false;
    return config;
}

/// Typed view of a resolved config. Stage seeds are derived from `seed`.
struct PipelineConfig {
    json raw;
    fs::path data;
    fs::path schema;
    fs::path work_dir;
    std::uint64_t seed = 42;
    std::size_t jobs = 1;
    std::size_t n_bins = 10;
    double threshold = 0.2;
    bool bias_corrected = false;
    SplitRatios split;
    bool use_autoencoder = true;
    AutoencoderConfig autoencoder;
    ClassifierConfig classifier;
    GridSpec grid;
    std::size_t cv_k = 10;
    SyntheticSpec synth;
    fs::path predict_input;
    fs::path predict_output;

    [[nodiscard]] std::uint64_t stage_seed(std::string_view stage) const { return derive_seed(seed, stage); }

    void require_inputs() const {
        if (data.empty()) throw config_error("MissingPath", "paths.data is not set");
        if (schema.empty()) throw config_error("MissingPath", "paths.schema is not set");
        if (!fs::exists(data)) throw config_error("MissingFile", "data file '" + data.string() + "' does not exist");
        if (!fs::exists(schema)) throw config_error("MissingFile", "schema file '" + schema.string() + "' does not exist");
    }
};

inline PipelineConfig parse_config(const json& j) {
    PipelineConfig c;
    c.raw = j;
    try {
        c.data = j.at("paths").at("data").get<std::string>();
        c.schema = j.at("paths").at("schema").get<std::string>();
        c.work_dir = j.at("paths").at("work_dir").get<std::string>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.jobs = std::max<std::size_t>(1, j.at("jobs").get<std::size_t>());
        const auto& a = j.at("association");
        c.n_bins = a.at("n_bins").get<std::size_t>();
        c.threshold = a.at("threshold").get<double>();
        c.bias_corrected = a.at("bias_corrected").get<bool>();
        const auto& s = j.at("split");
        c.split = {s.at("train").get<double>(), s.at("val").get<double>(), s.at("test").get<double>()};
        c.use_autoencoder = j.at("use_autoencoder").get<bool>();
        c.autoencoder = j.at("autoencoder").get<AutoencoderConfig>();
        c.classifier = j.at("classifier").get<ClassifierConfig>();
        c.grid = j.at("grid").get<GridSpec>();
        c.cv_k = j.at("cv").at("k").get<std::size_t>();
        c.synth = j.at("synth").get<SyntheticSpec>();
        c.predict_input = j.at("predict").at("input").get<std::string>();
        c.predict_output = j.at("predict").at("output").get<std::string>();
    } catch (const json::exception& e) {
        throw config_error("InvalidConfig", std::string{"bad config value: "} + e.what());
    }
    if (c.work_dir.empty()) throw config_error("MissingPath", "paths.work_dir is empty");
    if (c.threshold < 0.0 || c.threshold > 1.0) throw config_error("InvalidConfig", "association.threshold must lie in [0,1]");
    if (c.n_bins < 2) throw config_error("InvalidConfig", "association.n_bins must be >= 2");
    const double sum = c.split.train + c.split.val + c.split.test;
    if (std::abs(sum - 1.0) > 1e-9 || c.split.train <= 0 || c.split.val <= 0 || c.split.test <= 0)
        throw config_error("InvalidRatios", "split ratios must be positive and sum to 1");
    if (c.cv_k < 2) throw config_error("InvalidConfig", "cv.k must be >= 2");
    c.autoencoder.seed = c.stage_seed("autoencoder");
    c.classifier.seed = c.stage_seed("classifier");
    c.synth.seed = c.stage_seed("synth");
    return c;
}

// ---------------------------------------------------------------------------
// Work-directory layout

struct WorkDir {
    fs::path root;

    [[nodiscard]] fs::path operator/(const std::string& name) const { return root / name; }
    [[nodiscard]] fs::path features() const { return root / "features"; }
    [[nodiscard]] fs::path latent() const { return root / "latent"; }
    [[nodiscard]] fs::path autoencoder() const { return root / "autoencoder"; }
    [[nodiscard]] static std::string variant(bool weighted) { return weighted ? "weighted" : "unweighted"; }
    [[nodiscard]] fs::path classifier(bool weighted) const { return root / ("classifier_" + variant(weighted)); }
};

inline void require_file(const fs::path& p, const std::string& produced_by) {
    if (!fs::exists(p))
        throw config_error("MissingArtifact", "'" + p.string() + "' not found; run `" + produced_by + "` first");
}

namespace detail {

inline std::string number(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

inline void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw config_error("IoError", "cannot write '" + p.string() + "'");
    out << text;
}

inline Table load_table(const PipelineConfig& c, const fs::path& csv, bool require_target) {
    const auto schema = load_schema(c.schema.string());
    return ingest_csv(csv.string(), schema, {.require_target = require_target});
}

struct Prepared {
    FeaturePipeline pipeline;
    SchemaSpec schema;
    SplitIndices split;
    std::vector<int> targets;
    int classes = 0;
};

inline Prepared load_prepared(const WorkDir& w) {
    require_file(w / "preprocess.json", "preprocess");
    require_file(w / "splits.json", "preprocess");
    const auto j = io::read_json(w / "preprocess.json");
    Prepared p;
    p.pipeline = j.at("pipeline").get<FeaturePipeline>();
    p.schema = j.at("schema").get<SchemaSpec>();
    p.targets = j.at("targets").get<std::vector<int>>();
    p.classes = p.schema.target_cardinality;
    p.split = io::read_json(w / "splits.json").get<SplitIndices>();
    return p;
}

/// Latent features when the autoencoder is in use, else the assembled ones.
inline Matrix model_inputs(const PipelineConfig& c, const WorkDir& w) {
    if (c.use_autoencoder) {
        require_file(fs::path(w.latent()) += ".json", "encode");
        return io::load_features(w.latent()).values;
    }
    require_file(fs::path(w.features()) += ".json", "preprocess");
    return io::load_features(w.features()).values;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Stages. Each returns the artifacts it wrote, relative to the work dir.

using Outputs = std::vector<std::string>;

inline Outputs stage_synth(const PipelineConfig& c, const WorkDir&) {
    if (c.data.empty() || c.schema.empty()) throw config_error("MissingPath", "synth needs paths.data and paths.schema");
    const auto table = generate_synthetic(c.synth);
    std::ostringstream csv;
    write_csv(csv, table);
    detail::write_text(c.data, csv.str());
    io::write_json(c.schema, table.schema);
    return {c.data.string(), c.schema.string()};
}

inline Outputs stage_stats(const PipelineConfig& c, const WorkDir& w) {
    c.require_inputs();
    io::write_json(w / "stats.json", summarize(detail::load_table(c, c.data, true)));
    return {"stats.json"};
}

inline Outputs stage_associate(const PipelineConfig& c, const WorkDir& w) {
    c.require_inputs();
    const auto table = impute(detail::load_table(c, c.data, true));
    const auto matrix = association_matrix(table, c.n_bins, c.bias_corrected, {}, c.jobs);
    std::ostringstream out;
    csv::Record header{""};
    header.insert(header.end(), matrix.labels.begin(), matrix.labels.end());
    csv::write_record(out, header);
    for (std::size_t i = 0; i < matrix.size(); ++i) {
        csv::Record row{matrix.labels[i]};
        for (std::size_t j = 0; j < matrix.size(); ++j) row.push_back(detail::number(matrix.at(i, j)));
        csv::write_record(out, row);
    }
    detail::write_text(w / "association.csv", out.str());
    json selection = select_features(table, c.threshold, c.n_bins, c.bias_corrected);
    selection["n_bins"] = c.n_bins;
    selection["bias_corrected"] = c.bias_corrected;
    io::write_json(w / "selection.json", selection);
    return {"association.csv", "selection.json"};
}

inline Outputs stage_preprocess(const PipelineConfig& c, const WorkDir& w) {
    c.require_inputs();
    require_file(w / "selection.json", "associate");
    const auto selection = io::read_json(w / "selection.json").get<SelectionReport>();
    if (selection.selected.empty())
        throw data_error("EmptySelection", "no feature reached the association threshold " + detail::number(c.threshold));

    const auto raw = detail::load_table(c, c.data, true);
    const auto targets = raw.target();
    const auto split = stratified_split(targets, c.split, c.stage_seed("split"));
    const auto imputation = fit_imputation(take_rows(raw, split.train));
    const auto pipeline = FeaturePipeline::fit(apply_imputation(raw, imputation), imputation, selection.selected, split.train);
    const auto assembled = pipeline.transform(raw);

    io::save_features(w.features(), assembled.features);
    io::write_json(w / "splits.json", split);
    io::write_json(w / "preprocess.json", {{"pipeline", pipeline},
                                           {"schema", raw.schema},
                                           {"width", assembled.features.cols()},
                                           {"rows", raw.n_rows},
                                           {"dropped_rows", raw.dropped_rows},
                                           {"targets", targets}});
    return {"features.json", "features.bin", "splits.json", "preprocess.json"};
}

inline Outputs stage_train_ae(const PipelineConfig& c, const WorkDir& w) {
    const auto prep = detail::load_prepared(w);
    require_file(fs::path(w.features()) += ".json", "preprocess");
    const auto features = io::load_features(w.features());
    auto cfg = c.autoencoder;
    cfg.input_dim = features.cols();
    const auto ae = train_autoencoder(cfg, take_rows(features.values, prep.split.train), take_rows(features.values, prep.split.val));
    io::save_autoencoder(w.autoencoder(), ae);
    io::write_json(w / "autoencoder_history.json", history_json(ae));
    return {"autoencoder.json", "autoencoder.bin", "autoencoder_history.json"};
}

inline Outputs stage_encode(const PipelineConfig&, const WorkDir& w) {
    require_file(fs::path(w.autoencoder()) += ".json", "train-ae");
    require_file(fs::path(w.features()) += ".json", "preprocess");
    io::save_features(w.latent(), encode(io::load_autoencoder(w.autoencoder()), io::load_features(w.features())));
    return {"latent.json", "latent.bin"};
}

inline Outputs stage_train(const PipelineConfig& c, const WorkDir& w) {
    const auto prep = detail::load_prepared(w);
    const Matrix x = detail::model_inputs(c, w);
    const auto& s = prep.split;
    const auto train_y = take_rows(prep.targets, s.train);
    const auto val_y = take_rows(prep.targets, s.val);
    const auto test_y = take_rows(prep.targets, s.test);
    std::optional<ClassWeights> weights;
    if (c.classifier.use_class_weights) weights = compute_class_weights(train_y, prep.classes);
    const auto model = train_classifier(c.classifier, take_rows(x, s.train), train_y, take_rows(x, s.val), val_y, prep.classes, weights);

    const bool weighted = c.classifier.use_class_weights;
    const auto stem = "classifier_" + WorkDir::variant(weighted);
    io::save_classifier(w.classifier(weighted), model, {{"use_autoencoder", c.use_autoencoder}});
    io::write_json(w / (stem + "_history.json"), history_json(model));
    io::write_json(w / (stem + "_metrics.json"),
                   {{"variant", WorkDir::variant(weighted)},
                    {"use_autoencoder", c.use_autoencoder},
                    {"best_epoch", model.best_epoch},
                    {"validation", evaluate(model.predict(take_rows(x, s.val)), val_y, prep.classes)},
                    {"test", evaluate(model.predict(take_rows(x, s.test)), test_y, prep.classes)},
                    {"all_rows", evaluate(model.predict(x), prep.targets, prep.classes)}});
    return {stem + ".json", stem + ".bin", stem + "_history.json", stem + "_metrics.json"};
}

inline Outputs stage_grid(const PipelineConfig& c, const WorkDir& w) {
    const auto prep = detail::load_prepared(w);
    const Matrix x = detail::model_inputs(c, w);
    const auto& s = prep.split;
    const auto report = grid_search(c.grid, c.classifier, take_rows(x, s.train), take_rows(prep.targets, s.train),
                                    take_rows(x, s.val), take_rows(prep.targets, s.val), prep.classes,
                                    c.stage_seed("grid"), c.jobs);
    json j = report;
    j["grid"] = c.grid;
    j["base_config"] = c.classifier;
    j["seed"] = c.stage_seed("grid");
    j["use_autoencoder"] = c.use_autoencoder;
    io::write_json(w / "grid.json", j);

    std::ostringstream out;
    csv::write_record(out, {"rank", "index", "initial_neurons", "initial_dropout", "batch_size", "l2_penalty", "seed",
                            "val_accuracy", "val_ber", "best_epoch"});
    for (std::size_t r = 0; r < report.ranking.size(); ++r) {
        const auto& cell = report.cells[report.ranking[r]];
        csv::write_record(out, {std::to_string(r + 1), std::to_string(cell.index), std::to_string(cell.config.initial_neurons),
                                detail::number(cell.config.initial_dropout), std::to_string(cell.config.batch_size),
                                detail::number(cell.config.l2_penalty), std::to_string(cell.config.seed),
                                detail::number(cell.validation.accuracy), detail::number(cell.validation.ber),
                                std::to_string(cell.best_epoch)});
    }
    detail::write_text(w / "grid.csv", out.str());
    return {"grid.json", "grid.csv"};
}

/// Mean of each class's recall over the folds where that class was present.
inline std::vector<json> mean_recalls(const CVResult& r, int K) {
    std::vector<json> out;
    for (int k = 0; k < K; ++k) {
        std::vector<double> v;
        for (const auto& f : r.folds)
            if (!std::isnan(f.per_class_recall[static_cast<std::size_t>(k)])) v.push_back(f.per_class_recall[static_cast<std::size_t>(k)]);
        if (v.empty()) {
            out.emplace_back(nullptr);
        } else {
            const auto ms = mean_std(v);
            out.push_back({{"mean", ms.mean}, {"std", ms.stddev}});
        }
    }
    return out;
}

inline Outputs stage_cv(const PipelineConfig& c, const WorkDir& w) {
    const auto prep = detail::load_prepared(w);
    const Matrix x = detail::model_inputs(c, w);
    const auto result = cross_validate(classifier_runner(c.classifier, prep.classes), x, prep.targets, prep.classes,
                                       {.k = c.cv_k, .seed = c.stage_seed("cv"), .jobs = c.jobs});
    const auto variant = WorkDir::variant(c.classifier.use_class_weights);
    json j = result;
    j["variant"] = variant;
    j["config"] = c.classifier;
    j["use_autoencoder"] = c.use_autoencoder;
    j["per_class_recall"] = mean_recalls(result, prep.classes);
    io::write_json(w / ("cv_" + variant + ".json"), j);

    std::ostringstream out;
    csv::Record header{"fold", "rows", "seed", "accuracy", "ber"};
    for (int k = 1; k <= prep.classes; ++k) header.push_back("recall_" + std::to_string(k));
    csv::write_record(out, header);
    for (std::size_t i = 0; i < result.folds.size(); ++i) {
        const auto& f = result.folds[i];
        csv::Record row{std::to_string(i), std::to_string(result.fold_sizes[i]), std::to_string(result.fold_seeds[i]),
                        detail::number(f.accuracy), detail::number(f.ber)};
        for (double r : f.per_class_recall) row.push_back(std::isnan(r) ? std::string{} : detail::number(r));
        csv::write_record(out, row);
    }
    detail::write_text(w / ("cv_" + variant + ".csv"), out.str());
    return {"cv_" + variant + ".json", "cv_" + variant + ".csv"};
}

inline Outputs stage_predict(const PipelineConfig& c, const WorkDir& w) {
    const auto prep = detail::load_prepared(w);
    const fs::path input = c.predict_input.empty() ? c.data : c.predict_input;
    if (input.empty()) throw config_error("MissingPath", "set predict.input (or --input)");
    if (!fs::exists(input)) throw config_error("MissingFile", "input file '" + input.string() + "' does not exist");
    const bool weighted = c.classifier.use_class_weights;
    require_file(fs::path(w.classifier(weighted)) += ".json", "train");

    const auto table = ingest_csv(input.string(), prep.schema, {.require_target = false});
    Matrix x = prep.pipeline.transform(table).features.values;
    if (c.use_autoencoder) {
        require_file(fs::path(w.autoencoder()) += ".json", "train-ae");
        x = encode(io::load_autoencoder(w.autoencoder()), x);
    }
    const auto model = io::load_classifier(w.classifier(weighted));
    const auto predicted = model.predict(x);

    // rows with an observed target get scored; blank targets are still predicted
    const auto& target = table.target_column();
    std::vector<int> truth;
    std::vector<int> scored;
    for (std::size_t i = 0; i < table.n_rows; ++i)
        if (!target.labels.empty() && !target.missing[i]) {
            truth.push_back(target.labels[i]);
            scored.push_back(predicted[i]);
        }

    std::ostringstream out;
    csv::write_record(out, {"row", "predicted", "actual"});
    for (std::size_t i = 0; i < table.n_rows; ++i) {
        const bool known = !target.labels.empty() && !target.missing[i];
        csv::write_record(out, {std::to_string(i), std::to_string(predicted[i]), known ? std::to_string(target.labels[i]) : ""});
    }
    const fs::path output = c.predict_output.empty() ? w / "predictions.csv" : c.predict_output;
    detail::write_text(output, out.str());
    Outputs written{output.string()};
    if (!truth.empty()) {
        io::write_json(w / "predict_metrics.json", {{"variant", WorkDir::variant(weighted)},
                                                    {"rows", table.n_rows},
                                                    {"scored_rows", truth.size()},
                                                    {"metrics", evaluate(scored, truth, prep.classes)}});
        written.emplace_back("predict_metrics.json");
    }
    return written;
}

// ---------------------------------------------------------------------------
// Runner

struct StageResult {
    int exit_code = 0;
    Outputs outputs;
};

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names{"synth", "stats", "associate", "preprocess", "train-ae", "encode",
                                                "train", "grid",  "cv",        "predict",    "pipeline"};
    return names;
}

namespace detail {

inline json error_json(const std::string& stage, const std::string& category, const std::string& kind,
                       const std::string& message, int code) {
    return {{"error", {{"stage", stage}, {"category", category}, {"kind", kind}, {"message", message}, {"exit_code", code}}}};
}

inline std::string_view category_name(ErrorCategory c) {
    switch (c) {
    case ErrorCategory::Config: return "config";
    case ErrorCategory::Data: return "data";
    case ErrorCategory::Numeric: return "numeric";
    }
    return "unknown";
}

inline Outputs dispatch(const std::string& name, const PipelineConfig& c, const WorkDir& w, std::ostream& log);

/// Runs one stage, bracketing it with `<stage>.status.json`. The status file
/// says "complete": false until the stage finishes; wall-clock data lives
/// only there, under "meta".
inline int run_stage(const std::string& name, const PipelineConfig& c, const WorkDir& w, std::ostream& log) {
    const auto status = w / (name + ".status.json");
    const auto started = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count(); };
    io::write_json(status, {{"stage", name}, {"complete", false}});
    json error;
    int code = 0;
    Outputs outputs;
    try {
        outputs = dispatch(name, c, w, log);
    } catch (const Error& e) {
        code = exit_code(e.category());
        error = error_json(name, std::string{category_name(e.category())}, e.kind(), e.what(), code);
    } catch (const std::exception& e) {
        code = 1;
        error = error_json(name, "config", "Internal", e.what(), code);
    }
    json s = {{"stage", name}, {"complete", code == 0}, {"outputs", outputs}, {"meta", {{"elapsed_seconds", elapsed()}}}};
    if (code != 0) {
        s["error"] = error.at("error");
        std::cerr << error.dump() << '\n';
    } else {
        log << json{{"stage", name}, {"complete", true}, {"outputs", outputs}}.dump() << '\n';
    }
    io::write_json(status, s);
    return code;
}

inline Outputs stage_pipeline(const PipelineConfig& c, const WorkDir& w, std::ostream& log) {
    const std::vector<std::string> chain{"associate", "preprocess", "train-ae", "encode"};
    for (const auto& s : chain) {
        if (s == "train-ae" || s == "encode")
            if (!c.use_autoencoder) continue;
        if (const int code = run_stage(s, c, w, log); code != 0)
            throw Error(code == 3 ? ErrorCategory::Numeric : code == 2 ? ErrorCategory::Data : ErrorCategory::Config,
                        "StageFailed", "stage '" + s + "' failed");
    }
    json table1 = json::array();
    for (bool weighted : {true, false}) {
        PipelineConfig v = c;
        v.classifier.use_class_weights = weighted;
        for (const std::string s : {"train", "cv"})
            if (const int code = run_stage(s, v, w, log); code != 0)
                throw Error(code == 3 ? ErrorCategory::Numeric : code == 2 ? ErrorCategory::Data : ErrorCategory::Config,
                            "StageFailed", "stage '" + s + "' (" + WorkDir::variant(weighted) + ") failed");
        const auto cv = io::read_json(w / ("cv_" + WorkDir::variant(weighted) + ".json"));
        table1.push_back({{"model", weighted ? "DNN with class weights" : "DNN without class weights"},
                          {"variant", WorkDir::variant(weighted)},
                          {"accuracy", cv.at("accuracy")},
                          {"ber", cv.at("ber")},
                          {"per_class_recall", cv.at("per_class_recall")}});
    }
    io::write_json(w / "table1.json", {{"folds", c.cv_k}, {"use_autoencoder", c.use_autoencoder}, {"rows", table1}});
    return {"table1.json"};
}

inline Outputs dispatch(const std::string& name, const PipelineConfig& c, const WorkDir& w, std::ostream& log) {
    if (name == "synth") return stage_synth(c, w);
    if (name == "stats") return stage_stats(c, w);
    if (name == "associate") return stage_associate(c, w);
    if (name == "preprocess") return stage_preprocess(c, w);
    if (name == "train-ae") return stage_train_ae(c, w);
    if (name == "encode") return stage_encode(c, w);
    if (name == "train") return stage_train(c, w);
    if (name == "grid") return stage_grid(c, w);
    if (name == "cv") return stage_cv(c, w);
    if (name == "predict") return stage_predict(c, w);
    if (name == "pipeline") return stage_pipeline(c, w, log);
    throw config_error("UnknownSubcommand", "unknown subcommand '" + name + "'");
}

} // namespace detail

/// Resolves and validates `config`, then runs subcommand `name`. Returns the
/// process exit status: 0 ok, 1 usage/config, 2 data, 3 numeric.
inline int run_subcommand(const std::string& name, const json& config, std::ostream& log = std::cout) {
    PipelineConfig c;
    try {
        if (std::find(subcommands().begin(), subcommands().end(), name) == subcommands().end())
            throw config_error("UnknownSubcommand", "unknown subcommand '" + name + "'");
        c = parse_config(config);
        fs::create_directories(c.work_dir);
    } catch (const Error& e) {
        std::cerr << detail::error_json(name, std::string{detail::category_name(e.category())}, e.kind(), e.what(),
                                        exit_code(e.category())).dump()
                  << '\n';
        return exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << detail::error_json(name, "config", "Internal", e.what(), 1).dump() << '\n';
        return 1;
    }
    return detail::run_stage(name, c, WorkDir{c.work_dir}, log);
}

} // namespace sevnet::cli
