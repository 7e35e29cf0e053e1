#include "tdiff/operators.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "tdiff/errors.hpp"

namespace tdiff {

void LinearOperator::check_in(const ThermalImage& x) const {
    const Extent e = in_shape();
    if (x.width != e.width || x.height != e.height) {
        std::ostringstream msg;
        msg << describe() << ": input extent " << x.width << "x" << x.height
            << " does not match operator in_shape " << e.width << "x" << e.height;
        throw DataError(msg.str());
    }
}

void LinearOperator::check_out(const ThermalImage& v) const {
    const Extent e = out_shape();
    if (v.width != e.width || v.height != e.height) {
        std::ostringstream msg;
        msg << describe() << ": input extent " << v.width << "x" << v.height
            << " does not match operator out_shape " << e.width << "x" << e.height;
        throw DataError(msg.str());
    }
}

std::vector<double> conjugate_gradient(
    const std::function<std::vector<double>(const std::vector<double>&)>& apply,
    const std::vector<double>& rhs, double tol, int max_iters) {
    const size_t n = rhs.size();
    std::vector<double> x(n, 0.0), r = rhs, p = rhs, ap(n);
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    const double rhs_norm = std::sqrt(dot(rhs, rhs));
    if (rhs_norm == 0.0) return x;
    double rr = dot(r, r);
    // iterate past the contract tolerance down to roundoff; keep the best
    // iterate seen, bail on stagnation
    std::vector<double> best_x = x;
    double best_rr = rr;
    int stale = 0;
    for (int it = 0; it < max_iters; ++it) {
        if (std::sqrt(rr) <= 1e-15 * rhs_norm) break;
        ap = apply(p);
        const double pap = dot(p, ap);
        if (pap <= 0.0 || !std::isfinite(pap)) break;
        const double alpha = rr / pap;
        for (size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        const double rr_new = dot(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
        if (rr < best_rr) {
            best_rr = rr;
            best_x = x;
            stale = 0;
        } else if (++stale > 50) {
            break;
        }
    }
    if (std::sqrt(best_rr) <= tol * rhs_norm) return best_x;
    throw NumericError("conjugate gradient failed to converge (singular system at eta=0?)");
}

ThermalImage LinearOperator::solve_gram(const ThermalImage& r, double eta) const {
    check_out(r);
    if (eta < 0.0) throw DataError("solve_gram: eta must be nonnegative");
    const Extent oe = out_shape();
    auto apply = [&](const std::vector<double>& v) {
        ThermalImage vi(oe.width, oe.height, r.domain);
        vi.data = v;
        ThermalImage avi = forward(adjoint(vi));
        for (size_t i = 0; i < avi.data.size(); ++i) avi.data[i] += eta * v[i];
        return avi.data;
    };
    const int m = oe.width * oe.height;
    const double rhs_norm = std::sqrt(std::inner_product(r.data.begin(), r.data.end(),
                                                         r.data.begin(), 0.0));
    ThermalImage w(oe.width, oe.height, r.domain);
    if (rhs_norm == 0.0) return w;

    // conjugate gradients plus iterative refinement: each round solves for
    // the exact residual, recovering digits CG alone stalls short of
    std::vector<double> x = conjugate_gradient(apply, r.data, 1e-12, 10 * m);
    for (int round = 0; round < 2; ++round) {
        std::vector<double> res = apply(x);
        for (size_t i = 0; i < res.size(); ++i) res[i] = r.data[i] - res[i];
        const double res_norm = std::sqrt(std::inner_product(res.begin(), res.end(),
                                                             res.begin(), 0.0));
        if (res_norm <= 1e-15 * rhs_norm) break;
        try {
            const std::vector<double> dx = conjugate_gradient(apply, res, 1e-3, 10 * m);
            for (size_t i = 0; i < x.size(); ++i) x[i] += dx[i];
        } catch (const NumericError&) {
            break;  // refinement at roundoff level; the base solve met the contract
        }
    }
    w.data = std::move(x);
    return w;
}

// ---- Identity ----

ThermalImage IdentityOp::forward(const ThermalImage& x) const {
    check_in(x);
    return x;
}

ThermalImage IdentityOp::adjoint(const ThermalImage& v) const {
    check_out(v);
    return v;
}

ThermalImage IdentityOp::solve_gram(const ThermalImage& r, double eta) const {
    check_out(r);
    if (eta < 0.0) throw DataError("solve_gram: eta must be nonnegative");
    ThermalImage w = r;
    const double inv = 1.0 / (1.0 + eta);
    for (double& v : w.data) v *= inv;
    return w;
}

// ---- BoxDownsample ----

BoxDownsample::BoxDownsample(Extent in_extent, int factor)
    : in_(in_extent), factor_(factor) {
    if (factor < 1) throw DataError("downsample factor must be at least 1");
    if (in_.width % factor != 0 || in_.height % factor != 0)
        throw DataError("image extent must be divisible by the downsample factor");
    out_ = {in_.width / factor, in_.height / factor};
}

std::string BoxDownsample::describe() const {
    return "box_downsample{" + std::to_string(factor_) + "}";
}

ThermalImage BoxDownsample::forward(const ThermalImage& x) const {
    check_in(x);
    ThermalImage y(out_.width, out_.height, x.domain);
    const double inv = 1.0 / (factor_ * factor_);
    for (int by = 0; by < out_.height; ++by) {
        for (int bx = 0; bx < out_.width; ++bx) {
            double acc = 0.0;
            for (int j = 0; j < factor_; ++j)
                for (int i = 0; i < factor_; ++i)
                    acc += x.at(bx * factor_ + i, by * factor_ + j);
            y.at(bx, by) = acc * inv;
        }
    }
    return y;
}

ThermalImage BoxDownsample::adjoint(const ThermalImage& v) const {
    check_out(v);
    ThermalImage u(in_.width, in_.height, v.domain);
    const double inv = 1.0 / (factor_ * factor_);
    for (int by = 0; by < out_.height; ++by)
        for (int bx = 0; bx < out_.width; ++bx) {
            const double val = v.at(bx, by) * inv;
            for (int j = 0; j < factor_; ++j)
                for (int i = 0; i < factor_; ++i)
                    u.at(bx * factor_ + i, by * factor_ + j) = val;
        }
    return u;
}

ThermalImage BoxDownsample::solve_gram(const ThermalImage& r, double eta) const {
    check_out(r);
    if (eta < 0.0) throw DataError("solve_gram: eta must be nonnegative");
    // A A^T = (1/factor^2) I
    ThermalImage w = r;
    const double inv = 1.0 / (1.0 / (factor_ * factor_) + eta);
    for (double& v : w.data) v *= inv;
    return w;
}

// ---- GaussianBlur ----

GaussianBlur::GaussianBlur(Extent extent, std::vector<double> taps)
    : extent_(extent), taps_(std::move(taps)) {
    if (taps_.empty() || taps_.size() % 2 == 0)
        throw DataError("blur taps must have odd length");
    const int radius = static_cast<int>(taps_.size()) / 2;
    if (radius >= extent_.width || radius >= extent_.height)
        throw DataError("blur kernel radius exceeds image extent");
}

std::vector<double> GaussianBlur::gaussian_taps(int length, double sigma) {
    if (length < 1 || length % 2 == 0)
        throw DataError("gaussian taps length must be odd and positive");
    if (sigma <= 0.0) throw DataError("gaussian sigma must be positive");
    std::vector<double> taps(length);
    const int radius = length / 2;
    double sum = 0.0;
    for (int i = 0; i < length; ++i) {
        const double d = i - radius;
        taps[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += taps[i];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

std::string GaussianBlur::describe() const {
    return "gaussian_blur{" + std::to_string(taps_.size()) + " taps}";
}

std::vector<double> GaussianBlur::convolve_line(const std::vector<double>& line) const {
    const int n = static_cast<int>(line.size());
    const int radius = static_cast<int>(taps_.size()) / 2;
    std::vector<double> out(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
            acc += taps_[k + radius] * line[reflect_index(i + k, n)];
        out[i] = acc;
    }
    return out;
}

std::vector<double> GaussianBlur::adjoint_line(const std::vector<double>& line) const {
    // transpose of convolve_line: scatter each output's contribution back
    // through the reflected read positions
    const int n = static_cast<int>(line.size());
    const int radius = static_cast<int>(taps_.size()) / 2;
    std::vector<double> out(n, 0.0);
    for (int i = 0; i < n; ++i) {
        const double v = line[i];
        for (int k = -radius; k <= radius; ++k)
            out[reflect_index(i + k, n)] += taps_[k + radius] * v;
    }
    return out;
}

ThermalImage GaussianBlur::forward(const ThermalImage& x) const {
    check_in(x);
    ThermalImage out = x;
    std::vector<double> line;
    // rows
    line.resize(extent_.width);
    for (int y = 0; y < extent_.height; ++y) {
        for (int i = 0; i < extent_.width; ++i) line[i] = out.at(i, y);
        const auto res = convolve_line(line);
        for (int i = 0; i < extent_.width; ++i) out.at(i, y) = res[i];
    }
    // columns
    line.resize(extent_.height);
    for (int x2 = 0; x2 < extent_.width; ++x2) {
        for (int j = 0; j < extent_.height; ++j) line[j] = out.at(x2, j);
        const auto res = convolve_line(line);
        for (int j = 0; j < extent_.height; ++j) out.at(x2, j) = res[j];
    }
    return out;
}

ThermalImage GaussianBlur::adjoint(const ThermalImage& v) const {
    check_out(v);
    // reverse order of the separable passes, each transposed
    ThermalImage out = v;
    std::vector<double> line;
    line.resize(extent_.height);
    for (int x2 = 0; x2 < extent_.width; ++x2) {
        for (int j = 0; j < extent_.height; ++j) line[j] = out.at(x2, j);
        const auto res = adjoint_line(line);
        for (int j = 0; j < extent_.height; ++j) out.at(x2, j) = res[j];
    }
    line.resize(extent_.width);
    for (int y = 0; y < extent_.height; ++y) {
        for (int i = 0; i < extent_.width; ++i) line[i] = out.at(i, y);
        const auto res = adjoint_line(line);
        for (int i = 0; i < extent_.width; ++i) out.at(i, y) = res[i];
    }
    return out;
}

// ---- CompositeOp ----

CompositeOp::CompositeOp(std::vector<std::shared_ptr<const LinearOperator>> stages)
    : stages_(std::move(stages)) {
    if (stages_.empty()) throw DataError("composite operator needs at least one stage");
    for (size_t i = 1; i < stages_.size(); ++i) {
        if (!(stages_[i - 1]->out_shape() == stages_[i]->in_shape()))
            throw DataError("composite operator stages have mismatched shapes");
    }
}

std::string CompositeOp::describe() const {
    std::string s = "composite{";
    for (size_t i = 0; i < stages_.size(); ++i) {
        if (i) s += ", ";
        s += stages_[i]->describe();
    }
    return s + "}";
}

ThermalImage CompositeOp::forward(const ThermalImage& x) const {
    check_in(x);
    ThermalImage cur = x;
    for (const auto& stage : stages_) cur = stage->forward(cur);
    return cur;
}

ThermalImage CompositeOp::adjoint(const ThermalImage& v) const {
    check_out(v);
    ThermalImage cur = v;
    for (auto it = stages_.rbegin(); it != stages_.rend(); ++it)
        cur = (*it)->adjoint(cur);
    return cur;
}

// ---- Noise ----

void NoiseModel::validate() const {
    if (gaussian_sigma < 0.0 || fpn_column_sigma < 0.0 || fpn_row_sigma < 0.0)
        throw DataError("noise sigmas must be nonnegative");
}

ThermalImage fixed_pattern_noise(const NoiseModel& noise, Extent extent) {
    noise.validate();
    // the realization must depend only on (fpn_seed, extent)
    SeededRng rng(SeededRng::splitmix(noise.fpn_seed ^
                                      (static_cast<std::uint64_t>(extent.width) << 32 |
                                       static_cast<std::uint64_t>(extent.height))));
    std::vector<double> col(extent.width, 0.0), row(extent.height, 0.0);
    for (int x = 0; x < extent.width; ++x) col[x] = noise.fpn_column_sigma * rng.normal();
    for (int y = 0; y < extent.height; ++y) row[y] = noise.fpn_row_sigma * rng.normal();
    ThermalImage f(extent.width, extent.height, ValueDomain::Normalized);
    for (int y = 0; y < extent.height; ++y)
        for (int x = 0; x < extent.width; ++x) f.at(x, y) = col[x] + row[y];
    return f;
}

ThermalImage degrade(const ThermalImage& x, const LinearOperator& op,
                     const NoiseModel& noise, SeededRng& rng) {
    noise.validate();
    ThermalImage y = op.forward(x);
    if (noise.gaussian_sigma > 0.0)
        for (double& v : y.data) v += noise.gaussian_sigma * rng.normal();
    if (noise.fpn_column_sigma > 0.0 || noise.fpn_row_sigma > 0.0) {
        const ThermalImage f = fixed_pattern_noise(noise, op.out_shape());
        for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += f.data[i];
    }
    return y;
}

}  // namespace tdiff
