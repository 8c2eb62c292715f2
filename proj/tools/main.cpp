#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "hhsae/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical sparse autoencoder pipeline"};
    app.require_subcommand(1, 1);

    const std::map<std::string, std::string> help = {
        {"synthgen", "generate a planted-motif dataset into data/raw.csv"},
        {"preprocess", "split, log-transform, clip and standardize"},
        {"train", "train the model and write checkpoint.hhsae"},
        {"inspect", "dead ratios and energy shares of the checkpoint"},
        {"discover", "find L2 modules on the chosen cohort"},
        {"steer", "synthesize samples from the strongest module"},
        {"probe", "linear-probe AUC for each feature tier"},
        {"ablate", "disable the dense path and compare probes"},
        {"augment-eval", "classifier AUPRC with and without steered samples"},
    };

    hhsae::CliOptions opts;
    std::uint64_t seed = 0;
    for (const auto& name : hhsae::cli_commands()) {
        auto* sub = app.add_subcommand(name, help.at(name));
        sub->add_option("--config", opts.config_path, "JSON run config");
        sub->add_option("--override", opts.overrides, "dotted.key=value, repeatable")->take_all();
        sub->add_option("--run-dir", opts.run_dir, "run directory (default $HHSAE_RUN_DIR or runs/default)");
        sub->add_option("--seed", seed, "run seed, replaces the config value");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    auto* chosen = app.get_subcommands().front();
    if (chosen->count("--seed")) opts.seed = seed;
    return hhsae::run(chosen->get_name(), opts, std::cout, std::cerr);
}
