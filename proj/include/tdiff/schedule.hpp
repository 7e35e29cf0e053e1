#pragma once

#include <vector>

#include "tdiff/image.hpp"
#include "tdiff/rng.hpp"

namespace tdiff {

// Noise schedule tables. Timesteps are 0-based with t = 0 the least-noised
// step; beta is strictly increasing, alpha_bar strictly decreasing.
struct DiffusionSchedule {
    int steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    void check_step(int t) const;
};

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end);

// Forward noising: x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
ThermalImage q_sample(const ThermalImage& x0, int t, const ThermalImage& eps,
                      const DiffusionSchedule& sched);

// Inversion of q_sample given a noise estimate:
// x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t).
ThermalImage predict_x0(const ThermalImage& x_t, const ThermalImage& eps_hat,
                        int t, const DiffusionSchedule& sched);

struct ReverseStepParams {
    double eta_ddim = 0.0;  // stochasticity in [0, 1]; 0 is deterministic
    int t = 0;
};

// One reverse step from t to t_prev (t_prev = -1 denotes the clean state,
// alpha_bar treated as 1):
//   sigma = eta_ddim sqrt((1-abar_prev)/(1-abar_t)) sqrt(1 - abar_t/abar_prev)
//   x_prev = sqrt(abar_prev) x0_hat + sqrt(1-abar_prev-sigma^2) eps_hat + sigma z
ThermalImage ddim_step(const ThermalImage& x_t, const ThermalImage& x0_hat,
                       const ThermalImage& eps_hat, const ReverseStepParams& params,
                       SeededRng& rng, const DiffusionSchedule& sched,
                       int t_prev);

// Implicit-previous-step form; t = 0 has no previous step and is an error
// here (pass t_prev = -1 explicitly for the final transition to clean).
ThermalImage ddim_step(const ThermalImage& x_t, const ThermalImage& x0_hat,
                       const ThermalImage& eps_hat, const ReverseStepParams& params,
                       SeededRng& rng, const DiffusionSchedule& sched);

// Descending sub-sequence of timesteps for accelerated sampling; includes
// both endpoints steps-1 and 0.
std::vector<int> strided_timesteps(int schedule_steps, int sample_steps);

}  // namespace tdiff
