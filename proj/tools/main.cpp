#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "tdiff/commands.hpp"
#include "tdiff/config.hpp"
#include "tdiff/errors.hpp"

namespace {

struct GlobalArgs {
    std::string config_path;
    std::int64_t seed = -1;
    int threads = 0;
    bool force = false;
    bool verbose = false;
};

int run(const std::string& command, const GlobalArgs& args) {
    tdiff::ExperimentConfig cfg = tdiff::ExperimentConfig::load(args.config_path);
    if (args.seed >= 0) cfg.override_master_seed(static_cast<std::uint64_t>(args.seed));

    tdiff::CommandOptions opts;
    opts.force = args.force;
    opts.verbose = args.verbose;
    opts.threads = args.threads > 0
                       ? args.threads
                       : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    if (command == "gen-data") tdiff::cmd_gen_data(cfg, opts);
    else if (command == "degrade") tdiff::cmd_degrade(cfg, opts);
    else if (command == "train") tdiff::cmd_train(cfg, opts);
    else if (command == "restore") tdiff::cmd_restore(cfg, opts);
    else if (command == "evaluate") tdiff::cmd_evaluate(cfg, opts);
    else if (command == "ablate") tdiff::cmd_ablate(cfg, opts);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tdiff: patch-based diffusion restoration for thermal images"};
    app.require_subcommand(1);

    GlobalArgs args;
    app.add_option("--config", args.config_path, "experiment config file")->required();
    app.add_option("--seed", args.seed, "override seeds.master");
    app.add_option("--threads", args.threads, "worker threads (default: logical cores)");
    app.add_flag("--force", args.force, "overwrite non-empty output directories");
    app.add_flag("--verbose", args.verbose, "log progress to stderr");

    app.add_subcommand("gen-data", "generate a synthetic scene dataset");
    app.add_subcommand("degrade", "simulate degradations over a clean dataset");
    app.add_subcommand("train", "train the patch denoiser");
    app.add_subcommand("restore", "run guided reverse diffusion on degraded images");
    app.add_subcommand("evaluate", "PSNR/SSIM against a reference directory");
    app.add_subcommand("ablate", "patch size / overlap ablation table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        return run(app.get_subcommands().front()->get_name(), args);
    } catch (const tdiff::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const tdiff::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const tdiff::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
