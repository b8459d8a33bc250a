#include "bft/cli.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Bargmann-Fock turbulence experiment runner"};
    app.require_subcommand(1);

    bft::cli::RunOptions opts;
    std::string experiment, out;
    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("config", opts.config_path, "key = value config file")->required();
    run->add_option("--set", opts.overrides, "override a config key (key=value), repeatable")->take_all();
    run->add_option("--experiment", experiment, "experiment name")
        ->check(CLI::IsMember(bft::cli::experiment_names()));
    run->add_option("--out", out, "output directory");

    CLI11_PARSE(app, argc, argv);
    if (!experiment.empty()) opts.experiment = experiment;
    if (!out.empty()) opts.output = out;
    return bft::cli::run(opts, std::cout, std::cerr);
}
