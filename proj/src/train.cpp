#include "tdiff/train.hpp"

#include <cmath>
#include <fstream>

#include "tdiff/errors.hpp"

namespace tdiff {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw DataError("learning rate must be positive");
    if (batch_size < 1) throw DataError("batch size must be at least 1");
    if (epochs < 0) throw DataError("epoch count must be nonnegative");
}

double patch_variance(const PatchRef& patch) {
    const size_t n = patch.data.size();
    double mean = 0.0;
    for (double v : patch.data) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : patch.data) {
        const double d = v - mean;
        var += d * d;
    }
    return var / static_cast<double>(n);
}

std::vector<PatchRef> sample_training_patches(const std::vector<ThermalImage>& dataset,
                                              int ps, double threshold, int count,
                                              SeededRng& rng) {
    if (dataset.empty()) throw DataError("training dataset is empty");
    for (const auto& img : dataset)
        if (img.width < ps || img.height < ps)
            throw DataError("dataset image smaller than the patch size");
    std::vector<PatchRef> batch;
    batch.reserve(count);
    constexpr int kMaxRejections = 1000;
    for (int slot = 0; slot < count; ++slot) {
        int rejections = 0;
        for (;;) {
            const auto& img = dataset[rng.uniform_index(dataset.size())];
            const int ox = static_cast<int>(rng.uniform_index(img.width - ps + 1));
            const int oy = static_cast<int>(rng.uniform_index(img.height - ps + 1));
            PatchRef patch = extract_patch(img, ox, oy, ps);
            if (patch_variance(patch) > threshold) {
                batch.push_back(std::move(patch));
                break;
            }
            if (++rejections >= kMaxRejections)
                throw DataError("patch sampling exceeded 1000 rejections; dataset too flat "
                                "for variance threshold " + std::to_string(threshold));
        }
    }
    return batch;
}

double train_step(DenoiserNet& net, AdamOptimizer& optimizer,
                  const std::vector<PatchRef>& batch, SeededRng& rng,
                  const DiffusionSchedule& sched) {
    if (batch.empty()) throw DataError("train_step: empty batch");
    const int ps = net.config().patch_size;
    const int n = static_cast<int>(batch.size());

    std::vector<int> t(n);
    Tensor x_t(n, 1, ps, ps);
    Tensor eps(n, 1, ps, ps);
    for (int b = 0; b < n; ++b) {
        if (batch[b].size != ps) throw DataError("train_step: patch size mismatch");
        t[b] = static_cast<int>(rng.uniform_index(sched.steps));
        const double a = std::sqrt(sched.alpha_bar[t[b]]);
        const double s = std::sqrt(1.0 - sched.alpha_bar[t[b]]);
        double* ep = eps.plane_ptr(b, 0);
        double* xp = x_t.plane_ptr(b, 0);
        for (size_t i = 0; i < batch[b].data.size(); ++i) {
            ep[i] = rng.normal();
            xp[i] = a * batch[b].data[i] + s * ep[i];
        }
    }

    net.params().zero_grad();
    const Tensor pred = net.forward(x_t, t, /*cache=*/true);

    double loss = 0.0;
    Tensor grad(n, 1, ps, ps);
    const double inv = 1.0 / static_cast<double>(pred.size());
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const double d = pred.data[i] - eps.data[i];
        loss += d * d;
        grad.data[i] = 2.0 * d * inv;
    }
    loss *= inv;
    if (!std::isfinite(loss))
        throw NumericError("training loss is non-finite (divergence); inspect the learning "
                           "rate and input normalization");

    net.backward(grad);
    optimizer.step(net.params());
    return loss;
}

void train_loop(DenoiserNet& net, AdamOptimizer& optimizer,
                const std::vector<ThermalImage>& dataset, const TrainConfig& cfg,
                const DiffusionSchedule& sched, SeededRng& rng,
                const TrainLoopOptions& options) {
    cfg.validate();
    std::ofstream log;
    if (!options.loss_log_path.empty()) {
        log.open(options.loss_log_path, options.start_step > 0 ? std::ios::app : std::ios::out);
        if (!log) throw DataError("cannot open loss log '" + options.loss_log_path + "'");
    }
    const int ps = net.config().patch_size;
    for (std::int64_t step = options.start_step; step < options.total_steps; ++step) {
        const auto batch = sample_training_patches(dataset, ps, cfg.variance_threshold,
                                                   cfg.batch_size, rng);
        const double loss = train_step(net, optimizer, batch, rng, sched);
        if (log) log << step << " " << loss << "\n";
        if (options.on_step) options.on_step(step, loss);
        const bool last = step + 1 == options.total_steps;
        if (!options.checkpoint_path.empty() &&
            (last || (options.checkpoint_every > 0 && (step + 1) % options.checkpoint_every == 0))) {
            save_checkpoint(options.checkpoint_path, net, step + 1, sched.steps, &optimizer);
        }
    }
    if (options.total_steps == options.start_step && !options.checkpoint_path.empty()) {
        // zero-step run still leaves a valid checkpoint behind
        save_checkpoint(options.checkpoint_path, net, options.start_step, sched.steps, &optimizer);
    }
}

}  // namespace tdiff
