#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tdiff/image.hpp"
#include "tdiff/net.hpp"
#include "tdiff/operators.hpp"
#include "tdiff/patch_grid.hpp"
#include "tdiff/rng.hpp"
#include "tdiff/schedule.hpp"

namespace tdiff {

// Knobs of the measurement-guided sampler. delta_t defaults to the constant
// zeta; mu_t defaults to gamma / schedule_steps per executed step. Explicit
// per-timestep schedules override either.
struct GuidanceConfig {
    double eta_reg = 0.1;    // Gram regularizer in the BP term
    double scale_ls = 0.9;   // scalar weight c of the LS term
    double gamma = 80.0;     // total-correction scale; mu_t = gamma / T
    double eta_ddim = 0.7;   // reverse-step stochasticity
    double zeta = 0.9;       // model-vs-data blend; delta_t = zeta
    std::vector<double> mu_schedule;     // optional, indexed by timestep
    std::vector<double> delta_schedule;  // optional, indexed by timestep

    void validate() const;
    double mu_at(int t, int schedule_steps) const;
    double delta_at(int t) const;
};

// g_BP = A^T (A A^T + eta I)^{-1} (A x0_hat - y)
ThermalImage guidance_bp(const ThermalImage& x0_hat, const ThermalImage& y,
                         const LinearOperator& op, double eta_reg);

// g_LS = c A^T (A x0_hat - y)
ThermalImage guidance_ls(const ThermalImage& x0_hat, const ThermalImage& y,
                         const LinearOperator& op, double scale_ls);

// x - mu ((1 - delta) g_bp + delta g_ls)
ThermalImage guided_update(const ThermalImage& x_hat, const ThermalImage& g_bp,
                           const ThermalImage& g_ls, double mu, double delta);

// Per-timestep step sizes mu_t = mu_base * (1-abar_t) / ((1-abar_t) +
// abar_t sigma^2): full strength while the diffusion state is noisier than
// the measurement, attenuated below that crossover so measurement noise is
// not reinjected into the final denoising steps.
std::vector<double> snr_adaptive_mu(const DiffusionSchedule& sched, double mu_base,
                                    double noise_sigma);

// Patch-level noise predictor consumed by the restore loop. predict() must
// be safe to call concurrently for distinct thread ids.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual int patch_size() const = 0;
    virtual PatchRef predict(const PatchRef& patch, int t, int thread_id) const = 0;
};

// Runs a trained network; each worker thread gets its own clone so forward
// caches never collide.
class NetPredictor final : public NoisePredictor {
public:
    NetPredictor(const DenoiserNet& net, int threads);
    int patch_size() const override { return clones_.front()->config().patch_size; }
    PatchRef predict(const PatchRef& patch, int t, int thread_id) const override;

private:
    std::vector<std::unique_ptr<DenoiserNet>> clones_;
};

enum class GuidanceOrder {
    CorrectThenRenoise,  // apply the guided update to the aggregated estimate
    RenoiseThenCorrect,  // re-noise first, correct the next iterate
};

struct RestoreOptions {
    int sample_steps = 100;
    int patch_size = 16;
    int stride = 8;
    WindowKind window = WindowKind::RaisedCosine;
    GuidanceConfig guidance;
    GuidanceOrder order = GuidanceOrder::CorrectThenRenoise;
    bool clip_denoised = true;  // clamp aggregated x0 estimates to [-1, 1]
    bool shift_grid_per_step = false;
    int threads = 1;
    std::string dump_dir;  // when set, numbered per-step frames are written
    std::function<void(int, double, double)> on_step;  // (t, |g_bp|, |g_ls|)
};

// Full guided reverse diffusion: initialize from the regularized
// pseudo-inverse estimate plus noise, then per strided timestep tile,
// denoise, aggregate, correct and re-noise. Returns the x0 estimate in the
// Normalized domain, clipped to [-1, 1].
ThermalImage restore(const ThermalImage& y, const LinearOperator& op,
                     const NoisePredictor& denoiser, const DiffusionSchedule& sched,
                     const RestoreOptions& opts, SeededRng& rng);

}  // namespace tdiff
