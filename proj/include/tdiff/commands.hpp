#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tdiff/config.hpp"
#include "tdiff/guidance.hpp"
#include "tdiff/net.hpp"
#include "tdiff/operators.hpp"
#include "tdiff/schedule.hpp"

namespace tdiff {

struct CommandOptions {
    bool force = false;
    int threads = 1;
    bool verbose = false;
};

// Helpers shared by subcommands and tests.
std::shared_ptr<LinearOperator> operator_for_clean(const ExperimentConfig& cfg,
                                                   Extent clean_extent);
std::shared_ptr<LinearOperator> operator_for_measurement(const ExperimentConfig& cfg,
                                                         Extent measured_extent);
NoiseModel noise_from_config(const ExperimentConfig& cfg);
DiffusionSchedule schedule_from_config(const ExperimentConfig& cfg);
DenoiserConfig denoiser_from_config(const ExperimentConfig& cfg);
RestoreOptions restore_options_from_config(const ExperimentConfig& cfg,
                                           const CommandOptions& opts);
std::vector<std::string> list_pgm_files(const std::string& dir);

void cmd_gen_data(const ExperimentConfig& cfg, const CommandOptions& opts);
void cmd_degrade(const ExperimentConfig& cfg, const CommandOptions& opts);
void cmd_train(const ExperimentConfig& cfg, const CommandOptions& opts);
void cmd_restore(const ExperimentConfig& cfg, const CommandOptions& opts);
void cmd_evaluate(const ExperimentConfig& cfg, const CommandOptions& opts);
void cmd_ablate(const ExperimentConfig& cfg, const CommandOptions& opts);

}  // namespace tdiff
