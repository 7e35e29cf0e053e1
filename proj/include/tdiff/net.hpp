#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tdiff/rng.hpp"
#include "tdiff/tensor.hpp"

namespace tdiff {

// Named parameter tensor with its gradient accumulator.
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;

    size_t size() const { return value.size(); }
};

class ParamStore {
public:
    int add(std::string name, std::vector<int> shape);
    Param& at(int idx) { return params_[idx]; }
    const Param& at(int idx) const { return params_[idx]; }
    std::vector<Param>& all() { return params_; }
    const std::vector<Param>& all() const { return params_; }
    void zero_grad();
    size_t total_values() const;
    int find(const std::string& name) const;  // -1 if absent

private:
    std::vector<Param> params_;
};

// ---- layers -------------------------------------------------------------
// Layers hold parameter indices only; the store is passed into every call so
// a network clone is a plain member-wise copy.

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& name, int in_c, int out_c, int k,
           SeededRng& rng, bool zero_init = false);
    Tensor forward(const ParamStore& ps, const Tensor& x, bool cache);
    Tensor backward(ParamStore& ps, const Tensor& gy);

private:
    int in_c_ = 0, out_c_ = 0, k_ = 0, pad_ = 0;
    int w_idx_ = -1, b_idx_ = -1;
    Tensor cached_x_;
};

class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(ParamStore& ps, const std::string& name, int channels, int groups = 8);
    Tensor forward(const ParamStore& ps, const Tensor& x, bool cache);
    Tensor backward(ParamStore& ps, const Tensor& gy);

private:
    int channels_ = 0, groups_ = 0;
    int gamma_idx_ = -1, beta_idx_ = -1;
    Tensor cached_norm_;                 // normalized activations
    std::vector<double> cached_invstd_;  // per (n, group)
    static constexpr double kEps = 1e-5;
};

class SiLU {
public:
    Tensor forward(const Tensor& x, bool cache);
    Tensor backward(const Tensor& gy);

private:
    Tensor cached_x_;
};

class MatrixSiLU {
public:
    Matrix forward(const Matrix& x, bool cache);
    Matrix backward(const Matrix& gy);

private:
    Matrix cached_x_;
};

class Linear {
public:
    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, int in_dim, int out_dim,
           SeededRng& rng, bool zero_init = false);
    Matrix forward(const ParamStore& ps, const Matrix& x, bool cache);
    Matrix backward(ParamStore& ps, const Matrix& gy);

private:
    int in_dim_ = 0, out_dim_ = 0;
    int w_idx_ = -1, b_idx_ = -1;
    Matrix cached_x_;
};

Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_backward(const Tensor& gy, int in_h, int in_w);
Tensor upsample_nearest2(const Tensor& x);
Tensor upsample_nearest2_backward(const Tensor& gy);

// ---- denoiser -----------------------------------------------------------

struct DenoiserConfig {
    int patch_size = 16;
    int base_channels = 8;
    std::vector<int> channel_multipliers = {1, 2};
    int time_embed_dim = 32;

    void validate() const;
    bool operator==(const DenoiserConfig&) const = default;

    // desk16, desk32, desk64, full64, full128
    static DenoiserConfig preset(const std::string& name);
};

// Residual block with timestep conditioning:
//   h = conv1(silu(gn1(x))); h += proj(temb) per channel;
//   h = conv2(silu(gn2(h))); out = skip(x) + h
class ResBlock {
public:
    ResBlock() = default;
    ResBlock(ParamStore& ps, const std::string& name, int in_c, int out_c,
             int temb_dim, SeededRng& rng);
    Tensor forward(const ParamStore& ps, const Tensor& x, const Matrix& temb_act,
                   bool cache);
    // returns gradient w.r.t. x; adds this block's share to gtemb_act
    Tensor backward(ParamStore& ps, const Tensor& gy, Matrix& gtemb_act);

private:
    int in_c_ = 0, out_c_ = 0;
    bool has_skip_conv_ = false;
    GroupNorm gn1_, gn2_;
    SiLU act1_, act2_;
    Conv2d conv1_, conv2_, skip_;
    Linear proj_;
    Tensor cached_x_;
};

// Encoder-decoder noise predictor eps_theta(x_t, t): plain convolutions,
// group normalization, SiLU, sinusoidal timestep embedding injected into
// every residual block. No attention.
class DenoiserNet {
public:
    DenoiserNet(DenoiserConfig cfg, SeededRng& init_rng);

    const DenoiserConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    // x: [N, 1, ps, ps]; t: one schedule index per item.
    Tensor forward(const Tensor& x, const std::vector<int>& t, bool cache = false);
    // Gradient w.r.t. the forward output; accumulates into params().grad.
    void backward(const Tensor& grad_out);

private:
    Matrix time_embedding(const std::vector<int>& t) const;

    DenoiserConfig cfg_;
    ParamStore store_;
    int levels_ = 0;
    std::vector<int> level_ch_;

    Linear temb_lin1_, temb_lin2_;
    MatrixSiLU temb_silu_;
    Conv2d stem_;
    std::vector<ResBlock> down_;
    ResBlock mid_;
    std::vector<ResBlock> up_;  // indexed by level, used in reverse
    GroupNorm out_norm_;
    SiLU out_act_;
    Conv2d out_conv_;

    // training caches
    bool have_cache_ = false;
    Matrix cached_temb_out_;
    std::vector<Tensor> cached_skips_;
    std::vector<int> cached_hw_;
};

// ---- optimizer ----------------------------------------------------------

class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParamStore& ps);

    double learning_rate() const { return lr_; }
    int steps_taken() const { return t_; }
    std::vector<std::vector<double>>& moment1() { return m_; }
    std::vector<std::vector<double>>& moment2() { return v_; }
    void set_steps_taken(int t) { t_ = t; }

private:
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// ---- checkpoints ----------------------------------------------------------
// Versioned binary blob: magic, version, JSON config header, named float32
// tensors, trailing checksum.

struct Checkpoint {
    DenoiserConfig config;
    std::int64_t step = 0;
    int schedule_steps = 0;
};

void save_checkpoint(const std::string& path, const DenoiserNet& net,
                     std::int64_t step, int schedule_steps,
                     const AdamOptimizer* optimizer = nullptr);

struct LoadedCheckpoint {
    Checkpoint meta;
    std::unique_ptr<DenoiserNet> net;
    bool has_adam_state = false;
    int adam_steps = 0;
    std::vector<std::vector<double>> adam_m, adam_v;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace tdiff
