#include "tdiff/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "tdiff/errors.hpp"

namespace tdiff {

void DiffusionSchedule::check_step(int t) const {
    if (t < 0 || t >= steps)
        throw DataError("timestep " + std::to_string(t) + " outside schedule range [0, " +
                        std::to_string(steps - 1) + "]");
}

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 2) throw DataError("schedule needs at least 2 steps");
    if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0))
        throw DataError("schedule requires 0 < beta_start < beta_end < 1");
    DiffusionSchedule s;
    s.steps = steps;
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        const double frac = static_cast<double>(t) / (steps - 1);
        s.beta[t] = beta_start + (beta_end - beta_start) * frac;
        s.alpha[t] = 1.0 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

ThermalImage q_sample(const ThermalImage& x0, int t, const ThermalImage& eps,
                      const DiffusionSchedule& sched) {
    sched.check_step(t);
    if (!x0.same_extent(eps)) throw DataError("q_sample: noise extent mismatch");
    const double ab = sched.alpha_bar[t];
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    ThermalImage out = x0;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a * x0.data[i] + b * eps.data[i];
    return out;
}

ThermalImage predict_x0(const ThermalImage& x_t, const ThermalImage& eps_hat,
                        int t, const DiffusionSchedule& sched) {
    sched.check_step(t);
    if (!x_t.same_extent(eps_hat)) throw DataError("predict_x0: noise extent mismatch");
    const double ab = sched.alpha_bar[t];
    const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    ThermalImage out = x_t;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (x_t.data[i] - b * eps_hat.data[i]) / a;
    return out;
}

ThermalImage ddim_step(const ThermalImage& x_t, const ThermalImage& x0_hat,
                       const ThermalImage& eps_hat, const ReverseStepParams& params,
                       SeededRng& rng, const DiffusionSchedule& sched, int t_prev) {
    sched.check_step(params.t);
    if (params.t == 0 && t_prev >= 0)
        throw DataError("ddim_step: no previous step below t=0");
    if (t_prev >= params.t)
        throw DataError("ddim_step: t_prev must be below t");
    if (params.eta_ddim < 0.0 || params.eta_ddim > 1.0)
        throw DataError("ddim_step: eta_ddim must lie in [0, 1]");
    if (!x_t.same_extent(x0_hat) || !x_t.same_extent(eps_hat))
        throw DataError("ddim_step: extent mismatch");

    const double ab_t = sched.alpha_bar[params.t];
    const double ab_prev = t_prev < 0 ? 1.0 : sched.alpha_bar[t_prev];
    const double sigma = params.eta_ddim *
                         std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) *
                         std::sqrt(1.0 - ab_t / ab_prev);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
    const double a = std::sqrt(ab_prev);

    ThermalImage out = x_t;
    if (sigma > 0.0) {
        for (size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = a * x0_hat.data[i] + dir * eps_hat.data[i] + sigma * rng.normal();
    } else {
        for (size_t i = 0; i < out.data.size(); ++i)
            out.data[i] = a * x0_hat.data[i] + dir * eps_hat.data[i];
    }
    return out;
}

ThermalImage ddim_step(const ThermalImage& x_t, const ThermalImage& x0_hat,
                       const ThermalImage& eps_hat, const ReverseStepParams& params,
                       SeededRng& rng, const DiffusionSchedule& sched) {
    if (params.t == 0) throw DataError("ddim_step: no previous step below t=0");
    return ddim_step(x_t, x0_hat, eps_hat, params, rng, sched, params.t - 1);
}

std::vector<int> strided_timesteps(int schedule_steps, int sample_steps) {
    if (sample_steps < 1) throw DataError("sample step count must be positive");
    sample_steps = std::min(sample_steps, schedule_steps);
    std::vector<int> ts;
    if (sample_steps == 1) {
        ts.push_back(schedule_steps - 1);
        return ts;
    }
    ts.reserve(sample_steps);
    int prev = -1;
    for (int i = 0; i < sample_steps; ++i) {
        const double frac = static_cast<double>(i) / (sample_steps - 1);
        const int t = static_cast<int>(std::lround((schedule_steps - 1) * (1.0 - frac)));
        if (t != prev) ts.push_back(t);
        prev = t;
    }
    return ts;  // descending, ends at 0
}

}  // namespace tdiff
