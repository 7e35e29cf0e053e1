#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tdiff/image.hpp"
#include "tdiff/net.hpp"
#include "tdiff/rng.hpp"
#include "tdiff/schedule.hpp"

namespace tdiff {

struct TrainConfig {
    double learning_rate = 2e-4;
    int batch_size = 16;
    int epochs = 10;
    double variance_threshold = 0.6;  // in the normalized [-1,1] domain
    int checkpoint_every = 500;

    void validate() const;
};

// Uniformly random crops whose sample variance strictly exceeds the
// threshold; a slot errors out after 1000 consecutive rejections.
std::vector<PatchRef> sample_training_patches(const std::vector<ThermalImage>& dataset,
                                              int ps, double threshold, int count,
                                              SeededRng& rng);

double patch_variance(const PatchRef& patch);

// One optimizer step on a batch of clean normalized patches. Draws a uniform
// timestep and a noise realization per item, forms x_t, regresses the noise
// with mean squared error, applies one Adam update. Returns the pre-update
// loss.
double train_step(DenoiserNet& net, AdamOptimizer& optimizer,
                  const std::vector<PatchRef>& batch, SeededRng& rng,
                  const DiffusionSchedule& sched);

struct TrainLoopOptions {
    std::int64_t start_step = 0;
    std::int64_t total_steps = 0;
    std::string checkpoint_path;
    std::string loss_log_path;
    int checkpoint_every = 500;
    std::function<void(std::int64_t, double)> on_step;  // optional progress hook
};

// Runs sampling + train_step until total_steps, appending "step loss" lines
// to the loss log and writing periodic checkpoints.
void train_loop(DenoiserNet& net, AdamOptimizer& optimizer,
                const std::vector<ThermalImage>& dataset, const TrainConfig& cfg,
                const DiffusionSchedule& sched, SeededRng& rng,
                const TrainLoopOptions& options);

}  // namespace tdiff
