#pragma once

// On-disk artifacts: a JSON manifest next to a raw little-endian float64 blob,
// used both for feature matrices and for trained networks.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "models.hpp"
#include "neural.hpp"
#include "preprocess.hpp"

namespace sevnet::io {

inline constexpr int kFormatVersion = 1;

namespace fs = std::filesystem;

inline void write_json(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw config_error("IoError", "cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw config_error("MissingFile", "cannot open '" + path.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw data_error("InvalidJson", "'" + path.string() + "': " + e.what());
    }
}

/// Little-endian float64 stream writer/reader.
class BlobWriter {
public:
    explicit BlobWriter(const fs::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw config_error("IoError", "cannot write '" + path.string() + "'");
    }
    void put(double v) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        std::array<char, 8> bytes{};
        for (int i = 0; i < 8; ++i) bytes[static_cast<std::size_t>(i)] = static_cast<char>((bits >> (8 * i)) & 0xff);
        out_.write(bytes.data(), 8);
    }

private:
    std::ofstream out_;
};

class BlobReader {
public:
    explicit BlobReader(const fs::path& path) : in_(path, std::ios::binary) {
        if (!in_) throw config_error("MissingFile", "cannot open '" + path.string() + "'");
    }
    double get() {
        std::array<unsigned char, 8> bytes{};
        if (!in_.read(reinterpret_cast<char*>(bytes.data()), 8)) throw data_error("TruncatedBlob", "blob ended early");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[static_cast<std::size_t>(i)]) << (8 * i);
        return std::bit_cast<double>(bits);
    }
    [[nodiscard]] bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::ifstream in_;
};

/// `<base>.json` manifest + `<base>.bin` row-major blob.
inline void save_features(const fs::path& base, const FeatureMatrix& fm) {
    auto blob = base;
    blob += ".bin";
    auto manifest = base;
    manifest += ".json";
    write_json(manifest, {{"format", "sevnet.features"},
                          {"version", kFormatVersion},
                          {"rows", fm.rows()},
                          {"cols", fm.cols()},
                          {"dtype", "float64"},
                          {"byte_order", "little"},
                          {"layout", "row-major"},
                          {"labels", fm.labels},
                          {"blob", blob.filename().string()}});
    BlobWriter w(blob);
    for (Eigen::Index r = 0; r < fm.values.rows(); ++r)
        for (Eigen::Index c = 0; c < fm.values.cols(); ++c) w.put(fm.values(r, c));
}

inline FeatureMatrix load_features(const fs::path& base) {
    auto manifest = base;
    manifest += ".json";
    const auto j = read_json(manifest);
    if (j.value("format", "") != "sevnet.features") throw data_error("InvalidFormat", manifest.string() + " is not a feature manifest");
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    FeatureMatrix fm;
    fm.labels = j.at("labels").get<std::vector<std::string>>();
    if (static_cast<Eigen::Index>(fm.labels.size()) != cols) throw data_error("InvalidFormat", "label count differs from cols");
    fm.values.resize(rows, cols);
    BlobReader r(base.parent_path() / j.at("blob").get<std::string>());
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index c = 0; c < cols; ++c) fm.values(i, c) = r.get();
    return fm;
}

inline nlohmann::json spec_json(const NetworkSpec& spec) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : spec.layers) {
        if (const auto* d = std::get_if<Dense>(&l))
            layers.push_back({{"type", "dense"}, {"fan_in", d->fan_in}, {"fan_out", d->fan_out},
                              {"activation", std::string{to_string(d->activation)}}});
        else
            layers.push_back({{"type", "dropout"}, {"rate", std::get<Dropout>(l).rate}});
    }
    return {{"layers", layers}, {"l2_penalty", spec.l2_penalty}};
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
    NetworkSpec spec;
    spec.l2_penalty = j.at("l2_penalty").get<double>();
    for (const auto& l : j.at("layers")) {
        if (l.at("type") == "dense")
            spec.layers.emplace_back(Dense{l.at("fan_in").get<std::size_t>(), l.at("fan_out").get<std::size_t>(),
                                           parse_activation(l.at("activation").get<std::string>())});
        else
            spec.layers.emplace_back(Dropout{l.at("rate").get<double>()});
    }
    spec.validate();
    return spec;
}

/// Writes `<base>.json` (spec, configuration echo, format version) and
/// `<base>.bin` (each dense layer's weights row-major, then its bias).
inline void save_network(const fs::path& base, const std::string& kind, const NetworkSpec& spec, const Parameters& params,
                         const nlohmann::json& extra) {
    auto blob = base;
    blob += ".bin";
    auto manifest = base;
    manifest += ".json";
    nlohmann::json j = extra;
    j["format"] = "sevnet.model";
    j["version"] = kFormatVersion;
    j["kind"] = kind;
    j["spec"] = spec_json(spec);
    j["dtype"] = "float64";
    j["byte_order"] = "little";
    j["blob"] = blob.filename().string();
    write_json(manifest, j);
    BlobWriter w(blob);
    for (const auto& l : params.layers) {
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.put(l.weights(r, c));
        for (Eigen::Index c = 0; c < l.bias.size(); ++c) w.put(l.bias(c));
    }
}

struct LoadedNetwork {
    nlohmann::json manifest;
    NetworkSpec spec;
    Parameters params;
};

inline LoadedNetwork load_network(const fs::path& base) {
    auto manifest = base;
    manifest += ".json";
    LoadedNetwork out;
    out.manifest = read_json(manifest);
    if (out.manifest.value("format", "") != "sevnet.model") throw data_error("InvalidFormat", manifest.string() + " is not a model manifest");
    out.spec = spec_from_json(out.manifest.at("spec"));
    BlobReader r(base.parent_path() / out.manifest.at("blob").get<std::string>());
    for (const auto& d : out.spec.dense_layers()) {
        DenseParams p{Matrix(static_cast<Eigen::Index>(d.fan_in), static_cast<Eigen::Index>(d.fan_out)),
                      RowVector(static_cast<Eigen::Index>(d.fan_out))};
        for (Eigen::Index i = 0; i < p.weights.rows(); ++i)
            for (Eigen::Index c = 0; c < p.weights.cols(); ++c) p.weights(i, c) = r.get();
        for (Eigen::Index c = 0; c < p.bias.size(); ++c) p.bias(c) = r.get();
        out.params.layers.push_back(std::move(p));
    }
    if (!r.at_end()) throw data_error("InvalidFormat", "model blob longer than its spec");
    return out;
}

inline void save_autoencoder(const fs::path& base, const Autoencoder& ae) {
    save_network(base, "autoencoder", ae.spec, ae.params,
                 {{"config", ae.config}, {"seeds", {{"master", ae.config.seed}}}});
}

inline Autoencoder load_autoencoder(const fs::path& base) {
    auto net = load_network(base);
    if (net.manifest.at("kind") != "autoencoder") throw data_error("InvalidFormat", "model is not an autoencoder");
    Autoencoder ae;
    ae.config = net.manifest.at("config").get<AutoencoderConfig>();
    ae.spec = std::move(net.spec);
    ae.params = std::move(net.params);
    return ae;
}

inline void save_classifier(const fs::path& base, const Classifier& m, const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json j = extra;
    j["config"] = m.config;
    j["classes"] = m.classes;
    j["class_weights"] = m.weights.w;
    j["best_epoch"] = m.best_epoch;
    j["seeds"] = {{"master", m.config.seed}};
    save_network(base, "classifier", m.spec, m.params, j);
}

inline Classifier load_classifier(const fs::path& base) {
    auto net = load_network(base);
    if (net.manifest.at("kind") != "classifier") throw data_error("InvalidFormat", "model is not a classifier");
    Classifier m;
    m.config = net.manifest.at("config").get<ClassifierConfig>();
    m.classes = net.manifest.at("classes").get<int>();
    m.weights.w = net.manifest.at("class_weights").get<std::vector<double>>();
    m.best_epoch = net.manifest.at("best_epoch").get<std::size_t>();
    m.spec = std::move(net.spec);
    m.params = std::move(net.params);
    return m;
}

} // namespace sevnet::io
