#include <sevnet/cli.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    using namespace sevnet;
    CLI::App app{"Accident severity pipeline: feature association, autoencoder, class-weighted classifier, evaluation"};
    app.require_subcommand(1, 1);

    std::string config_path;
    cli::Overrides overrides;
    std::string input;
    std::string output;
    std::uint64_t seed = 0;
    std::size_t jobs = 0;
    std::string work_dir;

    const std::vector<std::pair<std::string, std::string>> help{
        {"synth", "generate a seeded synthetic CSV and its schema at paths.data / paths.schema"},
        {"stats", "dataset summary JSON"},
        {"associate", "Cramer's V matrix CSV and feature selection JSON"},
        {"preprocess", "feature matrix, split indices and fitted transforms"},
        {"train-ae", "train the autoencoder"},
        {"encode", "write latent features through the trained encoder"},
        {"train", "train the classifier and score it on the test split"},
        {"grid", "hyperparameter grid search on the validation split"},
        {"cv", "stratified k-fold cross-validation"},
        {"predict", "label a CSV with the saved transforms and models"},
        {"pipeline", "associate, preprocess, train-ae, encode, then train and cv with and without class weights"},
    };
    for (const auto& [name, text] : help) {
        auto* sub = app.add_subcommand(name, text);
        sub->add_option("--config,-c", config_path, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("--set", overrides.sets, "override a config value, e.g. --set classifier.epochs=10");
        sub->add_option("--seed", seed, "master seed");
        sub->add_option("--jobs,-j", jobs, "maximum worker threads for grid, cv and association");
        sub->add_option("--work-dir,-w", work_dir, "artifact directory");
        sub->add_flag("--no-class-weights", overrides.no_class_weights, "train without balanced class weights");
        if (name == "predict") {
            sub->add_option("--input,-i", input, "CSV to label (defaults to paths.data)");
            sub->add_option("--output,-o", output, "predictions CSV (defaults to <work-dir>/predictions.csv)");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    const auto* sub = app.get_subcommands().front();
    if (sub->count("--seed")) overrides.seed = seed;
    if (sub->count("--jobs")) overrides.jobs = jobs;
    if (sub->count("--work-dir")) overrides.work_dir = work_dir;
    if (!input.empty()) overrides.sets.push_back("predict.input=\"" + input + "\"");
    if (!output.empty()) overrides.sets.push_back("predict.output=\"" + output + "\"");

    nlohmann::json config;
    try {
        config = cli::resolve_config(config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_path), overrides);
    } catch (const Error& e) {
        std::cerr << nlohmann::json{{"error", {{"stage", sub->get_name()}, {"category", "config"}, {"kind", e.kind()}, {"message", e.what()}, {"exit_code", 1}}}}.dump()
                  << '\n';
        return exit_code(e.category());
    }
    return cli::run_subcommand(sub->get_name(), config);
}
