#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
    using namespace qfl::cli;

    CLI::App app{"Quantum federated learning simulator"};
    app.require_subcommand(1);

    RunOptions run;
    std::uint64_t run_seed = 0;
    std::string run_scheme;
    auto* run_cmd = app.add_subcommand("run", "Train a federation and write metrics");
    run_cmd->add_option("--config", run.config_path, "Config file (INI or manifest.json)")->required();
    run_cmd->add_option("--out", run.out_dir, "Output directory")->required();
    auto* seed_opt = run_cmd->add_option("--seed", run_seed, "Override federation.seed");
    auto* scheme_opt = run_cmd->add_option("--scheme", run_scheme, "Override federation.scheme")
                           ->check(CLI::IsMember({"simple", "weighted", "best_pick"}));

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset as CSV");
    synth_cmd->add_option("--samples", synth.samples, "Number of samples")->capture_default_str();
    synth_cmd->add_option("--features", synth.features, "Feature dimension")->capture_default_str();
    synth_cmd->add_option("--classes", synth.classes, "Number of classes")->capture_default_str();
    synth_cmd->add_option("--separation", synth.separation, "Prototype scale")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
    synth_cmd->add_option("--out", synth.out_path, "Output CSV path")->required();

    EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "Score saved parameters on a dataset");
    eval_cmd->add_option("--params", eval.params_path, "Parameter file")->required();
    eval_cmd->add_option("--data", eval.data_path, "Dataset CSV")->required();
    eval_cmd->add_option("--config", eval.config_path, "Config the parameters were trained with")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    if (*run_cmd) {
        if (*seed_opt) run.seed = run_seed;
        if (*scheme_opt) run.scheme = run_scheme;
        return cmd_run(run);
    }
    if (*synth_cmd) return cmd_synth(synth);
    return cmd_eval(eval);
}
