#include <iostream>

#include <CLI11.hpp>

#include "proxyfed/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"proxyfed — deterministic federated semi-supervised learning simulator"};
    app.require_subcommand(1);

    proxyfed::RunOptions run_opt;
    CLI::App* run = app.add_subcommand("run", "Run one federated training experiment");
    run->add_option("--config", run_opt.config_path, "Path to the JSON run config")->required();
    run->add_option("--set", run_opt.overrides, "key=value override, repeatable");
    run->add_option("--out", run_opt.out_dir, "Output directory (overrides the config's out_dir)");
    run->add_flag("--no-wall-time", run_opt.no_wall_time,
                  "Write 0 in the wall_time CSV column for byte-level comparisons");
    run->add_option("--save-params", run_opt.save_params_path, "Checkpoint the final global model here");
    run->add_option("--load-params", run_opt.load_params_path, "Start from this checkpoint instead of random init");

    proxyfed::SweepOptions sweep_opt;
    CLI::App* sweep = app.add_subcommand("sweep", "Run a grid of experiments and summarize final accuracy");
    sweep->add_option("--config", sweep_opt.config_path, "Path to the JSON run config")->required();
    sweep->add_option("--sweep", sweep_opt.sweep_specs, "key=v1,v2,... axis, repeatable")->required();
    sweep->add_option("--seeds", sweep_opt.seeds, "Seeds per cell (master_seed, master_seed+1, ...)");
    sweep->add_option("--out", sweep_opt.out_dir, "Output directory (overrides the config's out_dir)");
    sweep->add_flag("--no-wall-time", sweep_opt.no_wall_time, "Write 0 in the wall_time CSV columns");

    proxyfed::GradcheckOptions grad_opt;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "Verify all analytic gradients against finite differences");
    gradcheck->add_option("--seed", grad_opt.seed, "Base seed for the random instances");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return proxyfed::cmd_run(run_opt, std::cout, std::cerr);
    if (sweep->parsed()) return proxyfed::cmd_sweep(sweep_opt, std::cout, std::cerr);
    return proxyfed::cmd_gradcheck(grad_opt, std::cout, std::cerr);
}
