#include "tdiff/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <thread>

#include "tdiff/errors.hpp"
#include "tdiff/pgm_io.hpp"

namespace tdiff {

void GuidanceConfig::validate() const {
    if (eta_reg < 0.0) throw DataError("guidance eta_reg must be nonnegative");
    if (gamma < 0.0) throw DataError("guidance gamma must be nonnegative");
    if (eta_ddim < 0.0 || eta_ddim > 1.0) throw DataError("eta_ddim must lie in [0, 1]");
    if (zeta < 0.0 || zeta > 1.0) throw DataError("zeta must lie in [0, 1]");
    for (double m : mu_schedule)
        if (m < 0.0) throw DataError("mu schedule entries must be nonnegative");
    for (double d : delta_schedule)
        if (d < 0.0 || d > 1.0) throw DataError("delta schedule entries must lie in [0, 1]");
}

double GuidanceConfig::mu_at(int t, int schedule_steps) const {
    if (!mu_schedule.empty()) {
        if (t < 0 || t >= static_cast<int>(mu_schedule.size()))
            throw DataError("mu schedule does not cover timestep " + std::to_string(t));
        return mu_schedule[t];
    }
    return gamma / schedule_steps;
}

double GuidanceConfig::delta_at(int t) const {
    if (!delta_schedule.empty()) {
        if (t < 0 || t >= static_cast<int>(delta_schedule.size()))
            throw DataError("delta schedule does not cover timestep " + std::to_string(t));
        return delta_schedule[t];
    }
    return zeta;
}

ThermalImage guidance_bp(const ThermalImage& x0_hat, const ThermalImage& y,
                         const LinearOperator& op, double eta_reg) {
    ThermalImage residual = op.forward(x0_hat);
    if (!residual.same_extent(y)) throw DataError("guidance: measurement extent mismatch");
    for (size_t i = 0; i < residual.data.size(); ++i) residual.data[i] -= y.data[i];
    return op.adjoint(op.solve_gram(residual, eta_reg));
}

ThermalImage guidance_ls(const ThermalImage& x0_hat, const ThermalImage& y,
                         const LinearOperator& op, double scale_ls) {
    ThermalImage residual = op.forward(x0_hat);
    if (!residual.same_extent(y)) throw DataError("guidance: measurement extent mismatch");
    for (size_t i = 0; i < residual.data.size(); ++i) residual.data[i] -= y.data[i];
    ThermalImage g = op.adjoint(residual);
    for (double& v : g.data) v *= scale_ls;
    return g;
}

ThermalImage guided_update(const ThermalImage& x_hat, const ThermalImage& g_bp,
                           const ThermalImage& g_ls, double mu, double delta) {
    if (!x_hat.same_extent(g_bp) || !x_hat.same_extent(g_ls))
        throw DataError("guided_update: extent mismatch");
    ThermalImage out = x_hat;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] -= mu * ((1.0 - delta) * g_bp.data[i] + delta * g_ls.data[i]);
    return out;
}

std::vector<double> snr_adaptive_mu(const DiffusionSchedule& sched, double mu_base,
                                    double noise_sigma) {
    if (mu_base < 0.0) throw DataError("mu_base must be nonnegative");
    if (noise_sigma < 0.0) throw DataError("noise_sigma must be nonnegative");
    std::vector<double> mu(sched.steps);
    const double s2 = noise_sigma * noise_sigma;
    for (int t = 0; t < sched.steps; ++t) {
        const double nv = 1.0 - sched.alpha_bar[t];
        mu[t] = mu_base * nv / (nv + sched.alpha_bar[t] * s2);
    }
    return mu;
}

NetPredictor::NetPredictor(const DenoiserNet& net, int threads) {
    threads = std::max(1, threads);
    clones_.reserve(threads);
    for (int i = 0; i < threads; ++i)
        clones_.push_back(std::make_unique<DenoiserNet>(net));
}

PatchRef NetPredictor::predict(const PatchRef& patch, int t, int thread_id) const {
    DenoiserNet& net = *clones_[thread_id % clones_.size()];
    const int ps = net.config().patch_size;
    if (patch.size != ps) throw DataError("predictor patch size mismatch");
    Tensor x(1, 1, ps, ps);
    x.data = patch.data;
    const Tensor eps = net.forward(x, {t}, /*cache=*/false);
    PatchRef out = patch;
    out.data = eps.data;
    return out;
}

namespace {

double l2_norm(const ThermalImage& img) {
    double s = 0.0;
    for (double v : img.data) s += v * v;
    return std::sqrt(s);
}

void check_finite(const ThermalImage& img, int t) {
    for (double v : img.data)
        if (!std::isfinite(v))
            throw NumericError("restore: non-finite state at timestep " + std::to_string(t));
}

// Parallel map over patches with deterministic output order.
std::vector<PatchRef> predict_all(const std::vector<PatchRef>& patches,
                                  const NoisePredictor& denoiser, int t, int threads) {
    std::vector<PatchRef> out(patches.size());
    threads = std::max(1, std::min<int>(threads, static_cast<int>(patches.size())));
    if (threads == 1) {
        for (size_t i = 0; i < patches.size(); ++i)
            out[i] = denoiser.predict(patches[i], t, 0);
        return out;
    }
    std::vector<std::thread> workers;
    workers.reserve(threads);
    const size_t n = patches.size();
    for (int w = 0; w < threads; ++w) {
        const size_t lo = n * w / threads, hi = n * (w + 1) / threads;
        workers.emplace_back([&, lo, hi, w] {
            for (size_t i = lo; i < hi; ++i) out[i] = denoiser.predict(patches[i], t, w);
        });
    }
    for (auto& th : workers) th.join();
    return out;
}

}  // namespace

ThermalImage restore(const ThermalImage& y, const LinearOperator& op,
                     const NoisePredictor& denoiser, const DiffusionSchedule& sched,
                     const RestoreOptions& opts, SeededRng& rng) {
    opts.guidance.validate();
    const Extent oe = op.out_shape();
    if (y.width != oe.width || y.height != oe.height)
        throw DataError("restore: measurement extent does not match operator out_shape");
    const Extent ie = op.in_shape();
    if (denoiser.patch_size() != opts.patch_size)
        throw DataError("restore: denoiser patch size does not match grid patch size");

    // coarse estimate through the regularized pseudo-inverse
    ThermalImage x = op.adjoint(op.solve_gram(y, opts.guidance.eta_reg));
    x.domain = ValueDomain::Normalized;

    const std::vector<int> ts = strided_timesteps(sched.steps, opts.sample_steps);
    const double ab0 = sched.alpha_bar[ts.front()];
    const double a0 = std::sqrt(ab0), s0 = std::sqrt(1.0 - ab0);
    for (double& v : x.data) v = a0 * v + s0 * rng.normal();

    const PatchGrid base_grid =
        plan_grid(ie.width, ie.height, opts.patch_size, opts.stride, opts.window);

    if (!opts.dump_dir.empty()) std::filesystem::create_directories(opts.dump_dir);

    for (size_t idx = 0; idx < ts.size(); ++idx) {
        const int t = ts[idx];
        const int t_prev = idx + 1 < ts.size() ? ts[idx + 1] : -1;

        PatchGrid grid = base_grid;
        if (opts.shift_grid_per_step && opts.stride > 1) {
            // deterministic per-step jitter of the tiling lattice; boundary
            // origins are re-anchored so every pixel stays covered
            SeededRng jitter(SeededRng::splitmix(rng.seed() + 0x51ed + idx));
            const int sx = static_cast<int>(jitter.uniform_index(opts.stride));
            const int sy = static_cast<int>(jitter.uniform_index(opts.stride));
            auto shift_axis = [&](int extent, int shift) {
                std::vector<int> xs{0, extent - opts.patch_size};
                for (int x = shift; x + opts.patch_size <= extent; x += opts.stride)
                    xs.push_back(x);
                std::sort(xs.begin(), xs.end());
                xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
                return xs;
            };
            const auto xs = shift_axis(ie.width, sx);
            const auto ys = shift_axis(ie.height, sy);
            grid.origins.clear();
            for (int y2 : ys)
                for (int x2 : xs) grid.origins.emplace_back(x2, y2);
        }

        std::vector<PatchRef> patches;
        patches.reserve(grid.origins.size());
        for (auto [ox, oy] : grid.origins)
            patches.push_back(extract_patch(x, ox, oy, opts.patch_size));

        std::vector<PatchRef> eps_patches = predict_all(patches, denoiser, t, opts.threads);

        // per-patch x0 estimates
        const double ab = sched.alpha_bar[t];
        const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
        std::vector<PatchRef> x0_patches = std::move(eps_patches);
        for (size_t k = 0; k < x0_patches.size(); ++k)
            for (size_t i = 0; i < x0_patches[k].data.size(); ++i)
                x0_patches[k].data[i] =
                    (patches[k].data[i] - b * x0_patches[k].data[i]) / a;

        ThermalImage x0_agg = aggregate(x0_patches, grid);
        check_finite(x0_agg, t);
        // clamp the denoised estimate to the data range; unclipped estimates
        // at high t amplify prediction error by 1/sqrt(alpha_bar) and blow
        // up the strided trajectory
        if (opts.clip_denoised)
            for (double& v : x0_agg.data) v = std::clamp(v, -1.0, 1.0);

        const ThermalImage g_bp = guidance_bp(x0_agg, y, op, opts.guidance.eta_reg);
        const ThermalImage g_ls = guidance_ls(x0_agg, y, op, opts.guidance.scale_ls);
        const double mu = opts.guidance.mu_at(t, sched.steps);
        const double delta = opts.guidance.delta_at(t);
        if (opts.on_step) opts.on_step(t, l2_norm(g_bp), l2_norm(g_ls));

        const ReverseStepParams step_params{opts.guidance.eta_ddim, t};
        if (opts.order == GuidanceOrder::CorrectThenRenoise) {
            const ThermalImage x0_corr = guided_update(x0_agg, g_bp, g_ls, mu, delta);
            ThermalImage eps_imp = x;
            for (size_t i = 0; i < eps_imp.data.size(); ++i)
                eps_imp.data[i] = (x.data[i] - a * x0_corr.data[i]) / b;
            x = ddim_step(x, x0_corr, eps_imp, step_params, rng, sched, t_prev);
        } else {
            ThermalImage eps_imp = x;
            for (size_t i = 0; i < eps_imp.data.size(); ++i)
                eps_imp.data[i] = (x.data[i] - a * x0_agg.data[i]) / b;
            x = ddim_step(x, x0_agg, eps_imp, step_params, rng, sched, t_prev);
            x = guided_update(x, g_bp, g_ls, mu, delta);
        }
        check_finite(x, t);

        if (!opts.dump_dir.empty()) {
            char name[64];
            std::snprintf(name, sizeof name, "frame_%04zu_t%04d.pgm", idx, t);
            ThermalImage frame = x;
            for (double& v : frame.data) v = std::clamp(v, -1.0, 1.0);
            write_pgm(opts.dump_dir + "/" + name, frame);
        }
    }

    for (double& v : x.data) v = std::clamp(v, -1.0, 1.0);
    return x;
}

}  // namespace tdiff
