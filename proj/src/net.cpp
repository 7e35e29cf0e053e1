#include "tdiff/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>


#include "tdiff/errors.hpp"

namespace tdiff {

// ---- ParamStore ----

int ParamStore::add(std::string name, std::vector<int> shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    Param p;
    p.name = std::move(name);
    p.shape = std::move(shape);
    p.value.assign(n, 0.0);
    p.grad.assign(n, 0.0);
    params_.push_back(std::move(p));
    return static_cast<int>(params_.size()) - 1;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

size_t ParamStore::total_values() const {
    size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

int ParamStore::find(const std::string& name) const {
    for (size_t i = 0; i < params_.size(); ++i)
        if (params_[i].name == name) return static_cast<int>(i);
    return -1;
}

namespace {

void fill_normal(std::vector<double>& v, double stddev, SeededRng& rng) {
    for (double& x : v) x = stddev * rng.normal();
}

double silu_val(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return x * s;
}

double silu_grad(double x) {
    const double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

}  // namespace

// ---- Conv2d ----

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int in_c, int out_c,
               int k, SeededRng& rng, bool zero_init)
    : in_c_(in_c), out_c_(out_c), k_(k), pad_(k / 2) {
    w_idx_ = ps.add(name + ".weight", {out_c, in_c, k, k});
    b_idx_ = ps.add(name + ".bias", {out_c});
    if (!zero_init) {
        const double stddev = std::sqrt(2.0 / (in_c * k * k));
        fill_normal(ps.at(w_idx_).value, stddev, rng);
    }
}

Tensor Conv2d::forward(const ParamStore& ps, const Tensor& x, bool cache) {
    if (x.c != in_c_) throw DataError("conv: channel mismatch");
    const auto& w = ps.at(w_idx_).value;
    const auto& b = ps.at(b_idx_).value;
    Tensor y(x.n, out_c_, x.h, x.w);
    const int H = x.h, W = x.w;
    for (int n = 0; n < x.n; ++n) {
        for (int oc = 0; oc < out_c_; ++oc) {
            double* out = y.plane_ptr(n, oc);
            const double bias = b[oc];
            for (int i = 0; i < H * W; ++i) out[i] = bias;
            for (int ic = 0; ic < in_c_; ++ic) {
                const double* in = x.plane_ptr(n, ic);
                const double* wk = &w[(static_cast<size_t>(oc) * in_c_ + ic) * k_ * k_];
                for (int ky = 0; ky < k_; ++ky) {
                    const int dy = ky - pad_;
                    for (int kx = 0; kx < k_; ++kx) {
                        const int dx = kx - pad_;
                        const double wv = wk[ky * k_ + kx];
                        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                        const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                        for (int yy = y0; yy < y1; ++yy) {
                            const double* src = in + (yy + dy) * W + dx;
                            double* dst = out + yy * W;
                            for (int xx = x0; xx < x1; ++xx) dst[xx] += wv * src[xx];
                        }
                    }
                }
            }
        }
    }
    if (cache) cached_x_ = x;
    return y;
}

Tensor Conv2d::backward(ParamStore& ps, const Tensor& gy) {
    const Tensor& x = cached_x_;
    if (x.size() == 0) throw NumericError("conv backward without cached forward");
    const auto& w = ps.at(w_idx_).value;
    auto& gw = ps.at(w_idx_).grad;
    auto& gb = ps.at(b_idx_).grad;
    Tensor gx(x.n, in_c_, x.h, x.w);
    const int H = x.h, W = x.w;
    for (int n = 0; n < x.n; ++n) {
        for (int oc = 0; oc < out_c_; ++oc) {
            const double* g = gy.plane_ptr(n, oc);
            double gsum = 0.0;
            for (int i = 0; i < H * W; ++i) gsum += g[i];
            gb[oc] += gsum;
            for (int ic = 0; ic < in_c_; ++ic) {
                const double* in = x.plane_ptr(n, ic);
                double* gin = gx.plane_ptr(n, ic);
                const size_t wbase = (static_cast<size_t>(oc) * in_c_ + ic) * k_ * k_;
                for (int ky = 0; ky < k_; ++ky) {
                    const int dy = ky - pad_;
                    for (int kx = 0; kx < k_; ++kx) {
                        const int dx = kx - pad_;
                        const double wv = w[wbase + ky * k_ + kx];
                        double acc = 0.0;
                        const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                        const int x0 = std::max(0, -dx), x1 = std::min(W, W - dx);
                        for (int yy = y0; yy < y1; ++yy) {
                            const double* src = in + (yy + dy) * W + dx;
                            double* gdst = gin + (yy + dy) * W + dx;
                            const double* grow = g + yy * W;
                            for (int xx = x0; xx < x1; ++xx) {
                                acc += src[xx] * grow[xx];
                                gdst[xx] += wv * grow[xx];
                            }
                        }
                        gw[wbase + ky * k_ + kx] += acc;
                    }
                }
            }
        }
    }
    return gx;
}

// ---- GroupNorm ----

GroupNorm::GroupNorm(ParamStore& ps, const std::string& name, int channels, int groups)
    : channels_(channels), groups_(std::min(groups, channels)) {
    while (channels_ % groups_ != 0) --groups_;
    gamma_idx_ = ps.add(name + ".gamma", {channels});
    beta_idx_ = ps.add(name + ".beta", {channels});
    std::fill(ps.at(gamma_idx_).value.begin(), ps.at(gamma_idx_).value.end(), 1.0);
}

Tensor GroupNorm::forward(const ParamStore& ps, const Tensor& x, bool cache) {
    if (x.c != channels_) throw DataError("group norm: channel mismatch");
    const auto& gamma = ps.at(gamma_idx_).value;
    const auto& beta = ps.at(beta_idx_).value;
    const int cpg = channels_ / groups_;
    const size_t plane = x.plane();
    const size_t m = cpg * plane;
    Tensor y(x.n, x.c, x.h, x.w);
    Tensor norm(x.n, x.c, x.h, x.w);
    std::vector<double> invstd(static_cast<size_t>(x.n) * groups_);
    for (int n = 0; n < x.n; ++n) {
        for (int g = 0; g < groups_; ++g) {
            double mean = 0.0;
            for (int c = 0; c < cpg; ++c) {
                const double* p = x.plane_ptr(n, g * cpg + c);
                for (size_t i = 0; i < plane; ++i) mean += p[i];
            }
            mean /= static_cast<double>(m);
            double var = 0.0;
            for (int c = 0; c < cpg; ++c) {
                const double* p = x.plane_ptr(n, g * cpg + c);
                for (size_t i = 0; i < plane; ++i) {
                    const double d = p[i] - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(m);
            const double r = 1.0 / std::sqrt(var + kEps);
            invstd[static_cast<size_t>(n) * groups_ + g] = r;
            for (int c = 0; c < cpg; ++c) {
                const int ch = g * cpg + c;
                const double* p = x.plane_ptr(n, ch);
                double* np = norm.plane_ptr(n, ch);
                double* yp = y.plane_ptr(n, ch);
                const double gm = gamma[ch], bt = beta[ch];
                for (size_t i = 0; i < plane; ++i) {
                    np[i] = (p[i] - mean) * r;
                    yp[i] = gm * np[i] + bt;
                }
            }
        }
    }
    if (cache) {
        cached_norm_ = std::move(norm);
        cached_invstd_ = std::move(invstd);
    }
    return y;
}

Tensor GroupNorm::backward(ParamStore& ps, const Tensor& gy) {
    const Tensor& xn = cached_norm_;
    if (xn.size() == 0) throw NumericError("group norm backward without cached forward");
    const auto& gamma = ps.at(gamma_idx_).value;
    auto& ggamma = ps.at(gamma_idx_).grad;
    auto& gbeta = ps.at(beta_idx_).grad;
    const int cpg = channels_ / groups_;
    const size_t plane = xn.plane();
    const double m = static_cast<double>(cpg * plane);
    Tensor gx(xn.n, xn.c, xn.h, xn.w);
    for (int n = 0; n < xn.n; ++n) {
        for (int g = 0; g < groups_; ++g) {
            const double r = cached_invstd_[static_cast<size_t>(n) * groups_ + g];
            double sum_d = 0.0, sum_dx = 0.0;
            for (int c = 0; c < cpg; ++c) {
                const int ch = g * cpg + c;
                const double* gp = gy.plane_ptr(n, ch);
                const double* np = xn.plane_ptr(n, ch);
                const double gm = gamma[ch];
                double gg = 0.0, gb = 0.0;
                for (size_t i = 0; i < plane; ++i) {
                    const double d = gp[i] * gm;  // dL/dxhat
                    sum_d += d;
                    sum_dx += d * np[i];
                    gg += gp[i] * np[i];
                    gb += gp[i];
                }
                ggamma[ch] += gg;
                gbeta[ch] += gb;
            }
            for (int c = 0; c < cpg; ++c) {
                const int ch = g * cpg + c;
                const double* gp = gy.plane_ptr(n, ch);
                const double* np = xn.plane_ptr(n, ch);
                double* gxp = gx.plane_ptr(n, ch);
                const double gm = gamma[ch];
                for (size_t i = 0; i < plane; ++i) {
                    const double d = gp[i] * gm;
                    gxp[i] = r * (d - sum_d / m - np[i] * sum_dx / m);
                }
            }
        }
    }
    return gx;
}

// ---- SiLU ----

Tensor SiLU::forward(const Tensor& x, bool cache) {
    Tensor y = x;
    for (double& v : y.data) v = silu_val(v);
    if (cache) cached_x_ = x;
    return y;
}

Tensor SiLU::backward(const Tensor& gy) {
    const Tensor& x = cached_x_;
    if (x.size() == 0) throw NumericError("silu backward without cached forward");
    Tensor gx = gy;
    for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] *= silu_grad(x.data[i]);
    return gx;
}

Matrix MatrixSiLU::forward(const Matrix& x, bool cache) {
    Matrix y = x;
    for (double& v : y.data) v = silu_val(v);
    if (cache) cached_x_ = x;
    return y;
}

Matrix MatrixSiLU::backward(const Matrix& gy) {
    if (cached_x_.data.empty()) throw NumericError("silu backward without cached forward");
    Matrix gx = gy;
    for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] *= silu_grad(cached_x_.data[i]);
    return gx;
}

// ---- Linear ----

Linear::Linear(ParamStore& ps, const std::string& name, int in_dim, int out_dim,
               SeededRng& rng, bool zero_init)
    : in_dim_(in_dim), out_dim_(out_dim) {
    w_idx_ = ps.add(name + ".weight", {out_dim, in_dim});
    b_idx_ = ps.add(name + ".bias", {out_dim});
    if (!zero_init) fill_normal(ps.at(w_idx_).value, std::sqrt(1.0 / in_dim), rng);
}

Matrix Linear::forward(const ParamStore& ps, const Matrix& x, bool cache) {
    if (x.cols != in_dim_) throw DataError("linear: dimension mismatch");
    const auto& w = ps.at(w_idx_).value;
    const auto& b = ps.at(b_idx_).value;
    Matrix y(x.rows, out_dim_);
    for (int r = 0; r < x.rows; ++r) {
        for (int o = 0; o < out_dim_; ++o) {
            double acc = b[o];
            const double* wr = &w[static_cast<size_t>(o) * in_dim_];
            for (int i = 0; i < in_dim_; ++i) acc += wr[i] * x.at(r, i);
            y.at(r, o) = acc;
        }
    }
    if (cache) cached_x_ = x;
    return y;
}

Matrix Linear::backward(ParamStore& ps, const Matrix& gy) {
    const Matrix& x = cached_x_;
    if (x.data.empty()) throw NumericError("linear backward without cached forward");
    const auto& w = ps.at(w_idx_).value;
    auto& gw = ps.at(w_idx_).grad;
    auto& gb = ps.at(b_idx_).grad;
    Matrix gx(x.rows, in_dim_);
    for (int r = 0; r < x.rows; ++r) {
        for (int o = 0; o < out_dim_; ++o) {
            const double g = gy.at(r, o);
            gb[o] += g;
            const double* wr = &w[static_cast<size_t>(o) * in_dim_];
            double* gwr = &gw[static_cast<size_t>(o) * in_dim_];
            for (int i = 0; i < in_dim_; ++i) {
                gwr[i] += g * x.at(r, i);
                gx.at(r, i) += g * wr[i];
            }
        }
    }
    return gx;
}

// ---- pooling / upsampling ----

Tensor avg_pool2(const Tensor& x) {
    if (x.h % 2 != 0 || x.w % 2 != 0) throw DataError("avg_pool2 requires even extent");
    Tensor y(x.n, x.c, x.h / 2, x.w / 2);
    for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c) {
            const double* in = x.plane_ptr(n, c);
            double* out = y.plane_ptr(n, c);
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx) {
                    const double* p = in + (2 * yy) * x.w + 2 * xx;
                    out[yy * y.w + xx] = 0.25 * (p[0] + p[1] + p[x.w] + p[x.w + 1]);
                }
        }
    return y;
}

Tensor avg_pool2_backward(const Tensor& gy, int in_h, int in_w) {
    Tensor gx(gy.n, gy.c, in_h, in_w);
    for (int n = 0; n < gy.n; ++n)
        for (int c = 0; c < gy.c; ++c) {
            const double* g = gy.plane_ptr(n, c);
            double* out = gx.plane_ptr(n, c);
            for (int yy = 0; yy < gy.h; ++yy)
                for (int xx = 0; xx < gy.w; ++xx) {
                    const double v = 0.25 * g[yy * gy.w + xx];
                    double* p = out + (2 * yy) * in_w + 2 * xx;
                    p[0] += v;
                    p[1] += v;
                    p[in_w] += v;
                    p[in_w + 1] += v;
                }
        }
    return gx;
}

Tensor upsample_nearest2(const Tensor& x) {
    Tensor y(x.n, x.c, x.h * 2, x.w * 2);
    for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c) {
            const double* in = x.plane_ptr(n, c);
            double* out = y.plane_ptr(n, c);
            for (int yy = 0; yy < x.h; ++yy)
                for (int xx = 0; xx < x.w; ++xx) {
                    const double v = in[yy * x.w + xx];
                    double* p = out + (2 * yy) * y.w + 2 * xx;
                    p[0] = v;
                    p[1] = v;
                    p[y.w] = v;
                    p[y.w + 1] = v;
                }
        }
    return y;
}

Tensor upsample_nearest2_backward(const Tensor& gy) {
    if (gy.h % 2 != 0 || gy.w % 2 != 0) throw DataError("upsample backward requires even extent");
    Tensor gx(gy.n, gy.c, gy.h / 2, gy.w / 2);
    for (int n = 0; n < gy.n; ++n)
        for (int c = 0; c < gy.c; ++c) {
            const double* g = gy.plane_ptr(n, c);
            double* out = gx.plane_ptr(n, c);
            for (int yy = 0; yy < gx.h; ++yy)
                for (int xx = 0; xx < gx.w; ++xx) {
                    const double* p = g + (2 * yy) * gy.w + 2 * xx;
                    out[yy * gx.w + xx] = p[0] + p[1] + p[gy.w] + p[gy.w + 1];
                }
        }
    return gx;
}

// ---- DenoiserConfig ----

void DenoiserConfig::validate() const {
    if (patch_size < 4) throw DataError("patch size must be at least 4");
    if (base_channels < 1) throw DataError("base channels must be positive");
    if (channel_multipliers.empty()) throw DataError("at least one channel multiplier required");
    if (time_embed_dim < 4 || time_embed_dim % 2 != 0)
        throw DataError("time embedding dimension must be even and at least 4");
    int extent = patch_size;
    for (size_t i = 1; i < channel_multipliers.size(); ++i) {
        if (extent % 2 != 0)
            throw DataError("patch size not divisible by 2 at every level");
        extent /= 2;
    }
    if (extent < 2) throw DataError("network bottleneck would shrink below 2 pixels");
    for (int m : channel_multipliers)
        if (m < 1) throw DataError("channel multipliers must be positive");
}

DenoiserConfig DenoiserConfig::preset(const std::string& name) {
    if (name == "desk16") return {16, 8, {1, 2}, 32};
    if (name == "desk32") return {32, 16, {1, 2, 2}, 64};
    if (name == "desk64") return {64, 32, {1, 2, 2, 4}, 128};
    if (name == "full64") return {64, 32, {1, 1, 2, 2, 4, 4}, 128};
    if (name == "full128") return {128, 64, {1, 1, 2, 2, 4, 4}, 256};
    throw DataError("unknown denoiser preset '" + name + "'");
}

// ---- ResBlock ----

ResBlock::ResBlock(ParamStore& ps, const std::string& name, int in_c, int out_c,
                   int temb_dim, SeededRng& rng)
    : in_c_(in_c), out_c_(out_c), has_skip_conv_(in_c != out_c) {
    gn1_ = GroupNorm(ps, name + ".norm1", in_c);
    conv1_ = Conv2d(ps, name + ".conv1", in_c, out_c, 3, rng);
    proj_ = Linear(ps, name + ".temb_proj", temb_dim, out_c, rng);
    gn2_ = GroupNorm(ps, name + ".norm2", out_c);
    conv2_ = Conv2d(ps, name + ".conv2", out_c, out_c, 3, rng, /*zero_init=*/true);
    if (has_skip_conv_) skip_ = Conv2d(ps, name + ".skip", in_c, out_c, 1, rng);
}

Tensor ResBlock::forward(const ParamStore& ps, const Tensor& x, const Matrix& temb_act,
                         bool cache) {
    Tensor h = conv1_.forward(ps, act1_.forward(gn1_.forward(ps, x, cache), cache), cache);
    const Matrix bias = proj_.forward(ps, temb_act, cache);
    for (int n = 0; n < h.n; ++n)
        for (int c = 0; c < h.c; ++c) {
            const double b = bias.at(n, c);
            double* p = h.plane_ptr(n, c);
            for (size_t i = 0; i < h.plane(); ++i) p[i] += b;
        }
    h = conv2_.forward(ps, act2_.forward(gn2_.forward(ps, h, cache), cache), cache);
    Tensor out = has_skip_conv_ ? skip_.forward(ps, x, cache) : x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += h.data[i];
    if (cache) cached_x_ = x;
    return out;
}

Tensor ResBlock::backward(ParamStore& ps, const Tensor& gy, Matrix& gtemb_act) {
    // residual branch
    Tensor gh = gn2_.backward(ps, act2_.backward(conv2_.backward(ps, gy)));
    // per-channel time bias
    Matrix gbias(gh.n, gh.c);
    for (int n = 0; n < gh.n; ++n)
        for (int c = 0; c < gh.c; ++c) {
            const double* p = gh.plane_ptr(n, c);
            double acc = 0.0;
            for (size_t i = 0; i < gh.plane(); ++i) acc += p[i];
            gbias.at(n, c) = acc;
        }
    const Matrix gproj = proj_.backward(ps, gbias);
    for (size_t i = 0; i < gtemb_act.data.size(); ++i) gtemb_act.data[i] += gproj.data[i];
    Tensor gx = gn1_.backward(ps, act1_.backward(conv1_.backward(ps, gh)));
    // skip branch
    if (has_skip_conv_) {
        const Tensor gskip = skip_.backward(ps, gy);
        for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gskip.data[i];
    } else {
        for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += gy.data[i];
    }
    return gx;
}

// ---- DenoiserNet ----

DenoiserNet::DenoiserNet(DenoiserConfig cfg, SeededRng& init_rng) : cfg_(std::move(cfg)) {
    cfg_.validate();
    levels_ = static_cast<int>(cfg_.channel_multipliers.size());
    level_ch_.resize(levels_);
    for (int i = 0; i < levels_; ++i)
        level_ch_[i] = cfg_.base_channels * cfg_.channel_multipliers[i];

    const int td = cfg_.time_embed_dim;
    temb_lin1_ = Linear(store_, "temb.lin1", td, td, init_rng);
    temb_lin2_ = Linear(store_, "temb.lin2", td, td, init_rng);
    stem_ = Conv2d(store_, "stem", 1, cfg_.base_channels, 3, init_rng);

    int cur = cfg_.base_channels;
    down_.reserve(levels_);
    for (int i = 0; i < levels_; ++i) {
        down_.emplace_back(store_, "down" + std::to_string(i), cur, level_ch_[i], td, init_rng);
        cur = level_ch_[i];
    }
    mid_ = ResBlock(store_, "mid", cur, cur, td, init_rng);
    up_.resize(levels_);
    for (int i = levels_ - 1; i >= 0; --i) {
        const int in_ch = (i == levels_ - 1 ? level_ch_[i] : level_ch_[i + 1]) + level_ch_[i];
        up_[i] = ResBlock(store_, "up" + std::to_string(i), in_ch, level_ch_[i], td, init_rng);
    }
    out_norm_ = GroupNorm(store_, "out.norm", level_ch_[0]);
    out_conv_ = Conv2d(store_, "out.conv", level_ch_[0], 1, 3, init_rng, /*zero_init=*/true);
}

Matrix DenoiserNet::time_embedding(const std::vector<int>& t) const {
    const int d = cfg_.time_embed_dim;
    const int half = d / 2;
    Matrix emb(static_cast<int>(t.size()), d);
    for (size_t n = 0; n < t.size(); ++n) {
        for (int i = 0; i < half; ++i) {
            const double freq = std::exp(-std::log(10000.0) * i / half);
            const double arg = t[n] * freq;
            emb.at(static_cast<int>(n), i) = std::sin(arg);
            emb.at(static_cast<int>(n), half + i) = std::cos(arg);
        }
    }
    return emb;
}

Tensor DenoiserNet::forward(const Tensor& x, const std::vector<int>& t, bool cache) {
    if (x.c != 1 || x.h != cfg_.patch_size || x.w != cfg_.patch_size)
        throw DataError("denoiser input must be [N,1," + std::to_string(cfg_.patch_size) +
                        "," + std::to_string(cfg_.patch_size) + "]");
    if (static_cast<size_t>(x.n) != t.size())
        throw DataError("denoiser: one timestep per batch item required");

    const Matrix temb_sin = time_embedding(t);
    Matrix temb = temb_lin2_.forward(
        store_, temb_silu_.forward(temb_lin1_.forward(store_, temb_sin, cache), cache), cache);
    // shared nonlinearity before every per-block projection
    Matrix temb_act(temb.rows, temb.cols);
    for (size_t i = 0; i < temb.data.size(); ++i) temb_act.data[i] = silu_val(temb.data[i]);

    std::vector<Tensor> skips;
    std::vector<int> hw;
    Tensor cur = stem_.forward(store_, x, cache);
    for (int i = 0; i < levels_; ++i) {
        cur = down_[i].forward(store_, cur, temb_act, cache);
        skips.push_back(cur);
        if (i < levels_ - 1) {
            hw.push_back(cur.h);
            cur = avg_pool2(cur);
        }
    }
    cur = mid_.forward(store_, cur, temb_act, cache);
    for (int i = levels_ - 1; i >= 0; --i) {
        Tensor cat(cur.n, cur.c + skips[i].c, cur.h, cur.w);
        for (int n = 0; n < cur.n; ++n) {
            std::memcpy(cat.plane_ptr(n, 0), cur.plane_ptr(n, 0),
                        sizeof(double) * cur.c * cur.plane());
            std::memcpy(cat.plane_ptr(n, cur.c), skips[i].plane_ptr(n, 0),
                        sizeof(double) * skips[i].c * skips[i].plane());
        }
        cur = up_[i].forward(store_, cat, temb_act, cache);
        if (i > 0) cur = upsample_nearest2(cur);
    }
    cur = out_conv_.forward(store_, out_act_.forward(out_norm_.forward(store_, cur, cache), cache), cache);

    for (double v : cur.data)
        if (!std::isfinite(v))
            throw NumericError("denoiser produced non-finite activations");

    if (cache) {
        have_cache_ = true;
        cached_temb_out_ = std::move(temb);
        cached_skips_ = std::move(skips);
        cached_hw_ = std::move(hw);
    }
    return cur;
}

void DenoiserNet::backward(const Tensor& grad_out) {
    if (!have_cache_) throw NumericError("denoiser backward without cached forward");
    Matrix gtemb_act(cached_temb_out_.rows, cached_temb_out_.cols);

    Tensor g = out_norm_.backward(store_, out_act_.backward(out_conv_.backward(store_, grad_out)));
    std::vector<Tensor> gskips(levels_);
    for (int i = 0; i <= levels_ - 1; ++i) {
        if (i > 0) g = upsample_nearest2_backward(g);
        const Tensor gcat = up_[i].backward(store_, g, gtemb_act);
        const int main_c = gcat.c - cached_skips_[i].c;
        Tensor gmain(gcat.n, main_c, gcat.h, gcat.w);
        Tensor gskip(gcat.n, cached_skips_[i].c, gcat.h, gcat.w);
        for (int n = 0; n < gcat.n; ++n) {
            std::memcpy(gmain.plane_ptr(n, 0), gcat.plane_ptr(n, 0),
                        sizeof(double) * main_c * gcat.plane());
            std::memcpy(gskip.plane_ptr(n, 0), gcat.plane_ptr(n, main_c),
                        sizeof(double) * cached_skips_[i].c * gcat.plane());
        }
        gskips[i] = std::move(gskip);
        g = std::move(gmain);
    }
    g = mid_.backward(store_, g, gtemb_act);
    for (int i = levels_ - 1; i >= 0; --i) {
        if (i < levels_ - 1) g = avg_pool2_backward(g, cached_hw_[i], cached_hw_[i]);
        for (size_t j = 0; j < g.data.size(); ++j) g.data[j] += gskips[i].data[j];
        g = down_[i].backward(store_, g, gtemb_act);
    }
    stem_.backward(store_, g);

    // finish the shared time-embedding path
    Matrix gtemb(cached_temb_out_.rows, cached_temb_out_.cols);
    for (size_t i = 0; i < gtemb.data.size(); ++i)
        gtemb.data[i] = gtemb_act.data[i] * silu_grad(cached_temb_out_.data[i]);
    temb_lin1_.backward(store_, temb_silu_.backward(temb_lin2_.backward(store_, gtemb)));
    have_cache_ = false;
}

// ---- Adam ----

void AdamOptimizer::step(ParamStore& ps) {
    auto& params = ps.all();
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i].size(), 0.0);
            v_[i].assign(params[i].size(), 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params.size(); ++i) {
        auto& value = params[i].value;
        auto& grad = params[i].grad;
        auto& m = m_[i];
        auto& v = v_[i];
        for (size_t j = 0; j < value.size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * grad[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * grad[j] * grad[j];
            value[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
        }
    }
}

}  // namespace tdiff
