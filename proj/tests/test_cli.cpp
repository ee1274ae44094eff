#include <sevnet/cli.hpp>

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace sevnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("sevnet_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Small enough that the whole chain runs in about a second.
json small_config(const fs::path& dir) {
    cli::Overrides o;
    o.sets = {"paths.data=\"" + (dir / "data.csv").string() + "\"",
              "paths.schema=\"" + (dir / "schema.json").string() + "\"",
              "paths.work_dir=\"" + (dir / "work").string() + "\"",
              "synth.n_rows=600",
              "synth.mean_shift=1.5",
              "association.threshold=0.05",
              "autoencoder.encoder_widths=[8,4]",
              "autoencoder.epochs=5",
              "autoencoder.batch_size=64",
              "classifier.initial_neurons=16",
              "classifier.batch_size=64",
              "classifier.epochs=5",
              "cv.k=3"};
    return cli::resolve_config(std::nullopt, o);
}

int run(const std::string& name, const json& config) {
    std::ostringstream log;
    return cli::run_subcommand(name, config, log);
}

} // namespace

TEST(Config, SetParsesJsonValuesAndRejectsUnknownKeys) {
    auto c = cli::default_config();
    cli::apply_set(c, "classifier.epochs=7");
    cli::apply_set(c, "paths.data=some/file.csv");
    cli::apply_set(c, "grid.batch_size=[1,2]");
    EXPECT_EQ(c["classifier"]["epochs"], 7);
    EXPECT_EQ(c["paths"]["data"], "some/file.csv");
    EXPECT_EQ(c["grid"]["batch_size"], json::array({1, 2}));
    EXPECT_THROW(cli::apply_set(c, "classifier.epoch=7"), Error);
    EXPECT_THROW(cli::apply_set(c, "classifier=7"), Error);
    EXPECT_THROW(cli::apply_set(c, "novalue"), Error);
}

TEST(Config, FileIsCheckedAndFlagsWin) {
    const auto dir = scratch("config");
    std::ofstream(dir / "good.json") << R"({"seed": 5, "classifier": {"epochs": 3}})";
    std::ofstream(dir / "typo.json") << R"({"classifer": {"epochs": 3}})";
    cli::Overrides o;
    o.seed = 9;
    o.no_class_weights = true;
    o.work_dir = "elsewhere";
    const auto c = cli::resolve_config(dir / "good.json", o);
    EXPECT_EQ(c["seed"], 9);
    EXPECT_EQ(c["classifier"]["epochs"], 3);
    EXPECT_EQ(c["classifier"]["use_class_weights"], false);
    EXPECT_EQ(c["paths"]["work_dir"], "elsewhere");
    try {
        cli::resolve_config(dir / "typo.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), "UnknownKey");
    }
}

TEST(Config, ValidationRules) {
    auto c = cli::default_config();
    c["split"]["train"] = 0.7;
    EXPECT_THROW(cli::parse_config(c), Error);
    c = cli::default_config();
    c["association"]["threshold"] = 1.5;
    EXPECT_THROW(cli::parse_config(c), Error);
    const auto ok = cli::parse_config(cli::default_config());
    EXPECT_NE(ok.autoencoder.seed, ok.classifier.seed);
    EXPECT_EQ(ok.classifier.seed, cli::parse_config(cli::default_config()).classifier.seed);
}

TEST(Run, ExitCodesAndStatusFiles) {
    const auto dir = scratch("codes");
    auto config = small_config(dir);
    EXPECT_EQ(run("nonsense", config), 1);
    // missing input file is a config error
    EXPECT_EQ(run("stats", config), 1);
    // a stage whose prerequisite never ran is flagged incomplete
    EXPECT_EQ(run("train", config), 1);
    const auto status = io::read_json(dir / "work" / "train.status.json");
    EXPECT_FALSE(status.at("complete").get<bool>());
    EXPECT_EQ(status.at("error").at("kind"), "MissingArtifact");

    ASSERT_EQ(run("synth", config), 0);
    // a CSV lacking a schema column is a data error
    std::ofstream(dir / "bad.csv") << "num0,Severity\n1,2\n";
    auto bad = config;
    bad["paths"]["data"] = (dir / "bad.csv").string();
    EXPECT_EQ(run("stats", bad), 2);

    // a diverging autoencoder is a numeric failure
    ASSERT_EQ(run("associate", config), 0);
    ASSERT_EQ(run("preprocess", config), 0);
    auto diverge = config;
    diverge["autoencoder"]["learning_rate"] = 1e300;
    EXPECT_EQ(run("train-ae", diverge), 3);
    EXPECT_FALSE(io::read_json(dir / "work" / "train-ae.status.json").at("complete").get<bool>());
}

TEST(Run, StageArtifacts) {
    const auto dir = scratch("stages");
    const auto config = small_config(dir);
    const fs::path w = dir / "work";
    ASSERT_EQ(run("synth", config), 0);
    ASSERT_EQ(run("stats", config), 0);
    EXPECT_EQ(io::read_json(w / "stats.json").at("n_rows"), 600);

    ASSERT_EQ(run("associate", config), 0);
    const auto header = slurp(w / "association.csv").substr(0, slurp(w / "association.csv").find('\n'));
    EXPECT_NE(header.find("Severity"), std::string::npos);
    const auto selection = io::read_json(w / "selection.json");
    EXPECT_FALSE(selection.at("selected").empty());

    ASSERT_EQ(run("preprocess", config), 0);
    const auto features = io::load_features(w / "features");
    EXPECT_EQ(features.rows(), 600u);
    const auto splits = io::read_json(w / "splits.json").get<SplitIndices>();
    EXPECT_EQ(splits.train.size() + splits.val.size() + splits.test.size(), 600u);

    ASSERT_EQ(run("train-ae", config), 0);
    ASSERT_EQ(run("encode", config), 0);
    EXPECT_EQ(io::load_features(w / "latent").cols(), 4u);
    EXPECT_EQ(io::read_json(w / "autoencoder_history.json").at("epochs").size(), 5u);

    ASSERT_EQ(run("train", config), 0);
    const auto metrics = io::read_json(w / "classifier_weighted_metrics.json");
    std::int64_t total = 0;
    for (const auto& row : metrics.at("test").at("confusion"))
        for (const auto& v : row) total += v.get<std::int64_t>();
    EXPECT_EQ(total, static_cast<std::int64_t>(splits.test.size()));

    auto grid = config;
    grid["grid"] = {{"initial_neurons", {8, 16}}, {"initial_dropout", {0.2}}, {"batch_size", {64}}, {"l2_penalty", {0.001}}};
    ASSERT_EQ(run("grid", grid), 0);
    EXPECT_EQ(io::read_json(w / "grid.json").at("cells").size(), 2u);
    const auto grid_csv = slurp(w / "grid.csv");
    EXPECT_EQ(std::count(grid_csv.begin(), grid_csv.end(), '\n'), 3);

    ASSERT_EQ(run("cv", config), 0);
    const auto cv = io::read_json(w / "cv_weighted.json");
    EXPECT_EQ(cv.at("folds").size(), 3u);
    EXPECT_TRUE(cv.at("ber").contains("mean"));
    EXPECT_TRUE(cv.at("ber").contains("std"));
    EXPECT_TRUE(io::read_json(w / "cv.status.json").at("complete").get<bool>());
}

TEST(Run, PredictOnTrainingCsvReproducesTrainingConfusion) {
    const auto dir = scratch("predict");
    const auto config = small_config(dir);
    ASSERT_EQ(run("synth", config), 0);
    ASSERT_EQ(run("pipeline", config), 0);
    for (bool weighted : {true, false}) {
        auto c = config;
        c["classifier"]["use_class_weights"] = weighted;
        ASSERT_EQ(run("predict", c), 0);
        const auto variant = std::string{weighted ? "weighted" : "unweighted"};
        const auto trained = io::read_json(dir / "work" / ("classifier_" + variant + "_metrics.json"));
        const auto predicted = io::read_json(dir / "work" / "predict_metrics.json");
        EXPECT_EQ(predicted.at("metrics").at("confusion"), trained.at("all_rows").at("confusion"));
    }
    const auto csv = slurp(dir / "work" / "predictions.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 601);
}

TEST(Run, PipelineIsDeterministic) {
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    auto ca = small_config(a);
    auto cb = small_config(b);
    ASSERT_EQ(run("synth", ca), 0);
    ASSERT_EQ(run("synth", cb), 0);
    EXPECT_EQ(slurp(a / "data.csv"), slurp(b / "data.csv"));
    ASSERT_EQ(run("pipeline", ca), 0);
    ASSERT_EQ(run("pipeline", cb), 0);
    for (const auto* name : {"table1.json", "cv_weighted.json", "cv_unweighted.json", "classifier_weighted_metrics.json",
                             "classifier_unweighted_metrics.json", "selection.json", "association.csv", "splits.json",
                             "features.bin", "latent.bin", "classifier_weighted.bin"}) {
        EXPECT_EQ(slurp(a / "work" / name), slurp(b / "work" / name)) << name;
    }
    const auto table1 = io::read_json(a / "work" / "table1.json");
    ASSERT_EQ(table1.at("rows").size(), 2u);
    EXPECT_EQ(table1.at("rows")[0].at("variant"), "weighted");
    EXPECT_EQ(table1.at("rows")[1].at("variant"), "unweighted");
}

TEST(Binary, UsageErrorsExitWithOne) {
    const std::string cli = SEVNET_CLI_PATH;
    EXPECT_EQ(WEXITSTATUS(std::system((cli + " > /dev/null 2>&1").c_str())), 1);
    EXPECT_EQ(WEXITSTATUS(std::system((cli + " stats --bogus > /dev/null 2>&1").c_str())), 1);
    EXPECT_EQ(WEXITSTATUS(std::system((cli + " stats --set nope=1 > /dev/null 2>&1").c_str())), 1);
    EXPECT_EQ(WEXITSTATUS(std::system((cli + " --help > /dev/null 2>&1").c_str())), 0);
}

TEST(Binary, ShippedConfigsParse) {
    const fs::path configs = fs::path(SEVNET_SOURCE_DIR) / "configs";
    std::size_t n = 0;
    for (const auto& entry : fs::directory_iterator(configs)) {
        if (entry.path().extension() != ".json") continue;
        ++n;
        EXPECT_NO_THROW(cli::parse_config(cli::resolve_config(entry.path()))) << entry.path();
    }
    EXPECT_GT(n, 0u);
    const fs::path schemas = fs::path(SEVNET_SOURCE_DIR) / "schemas";
    for (const auto& entry : fs::directory_iterator(schemas))
        EXPECT_NO_THROW(load_schema(entry.path().string())) << entry.path();
}
