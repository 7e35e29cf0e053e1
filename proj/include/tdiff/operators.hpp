#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tdiff/image.hpp"
#include "tdiff/rng.hpp"

namespace tdiff {

struct Extent {
    int width = 0;
    int height = 0;
    bool operator==(const Extent&) const = default;
};

// Linear degradation operator A: forward application, its adjoint, and a
// solve of (A A^T + eta I) w = r that exploits the operator's structure
// where possible. The adjoint must satisfy <A u, v> == <u, A^T v>.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;

    virtual Extent in_shape() const = 0;
    virtual Extent out_shape() const = 0;
    virtual std::string describe() const = 0;

    virtual ThermalImage forward(const ThermalImage& x) const = 0;
    virtual ThermalImage adjoint(const ThermalImage& v) const = 0;

    // Default implementation runs conjugate gradients on A A^T + eta I.
    virtual ThermalImage solve_gram(const ThermalImage& r, double eta) const;

protected:
    void check_in(const ThermalImage& x) const;
    void check_out(const ThermalImage& v) const;
};

class IdentityOp final : public LinearOperator {
public:
    explicit IdentityOp(Extent extent) : extent_(extent) {}
    Extent in_shape() const override { return extent_; }
    Extent out_shape() const override { return extent_; }
    std::string describe() const override { return "identity"; }
    ThermalImage forward(const ThermalImage& x) const override;
    ThermalImage adjoint(const ThermalImage& v) const override;
    ThermalImage solve_gram(const ThermalImage& r, double eta) const override;

private:
    Extent extent_;
};

// Block-mean downsampling by an integer factor. Its Gram matrix is
// (1/factor^2) I, so the solve is closed form.
class BoxDownsample final : public LinearOperator {
public:
    BoxDownsample(Extent in_extent, int factor);
    Extent in_shape() const override { return in_; }
    Extent out_shape() const override { return out_; }
    int factor() const { return factor_; }
    std::string describe() const override;
    ThermalImage forward(const ThermalImage& x) const override;
    ThermalImage adjoint(const ThermalImage& v) const override;
    ThermalImage solve_gram(const ThermalImage& r, double eta) const override;

private:
    Extent in_, out_;
    int factor_;
};

// Separable convolution with odd-length taps, reflect boundary. The adjoint
// folds border contributions back onto their mirrored source pixels.
class GaussianBlur final : public LinearOperator {
public:
    GaussianBlur(Extent extent, std::vector<double> taps);
    static std::vector<double> gaussian_taps(int length, double sigma);
    Extent in_shape() const override { return extent_; }
    Extent out_shape() const override { return extent_; }
    const std::vector<double>& taps() const { return taps_; }
    std::string describe() const override;
    ThermalImage forward(const ThermalImage& x) const override;
    ThermalImage adjoint(const ThermalImage& v) const override;

private:
    std::vector<double> convolve_line(const std::vector<double>& line) const;
    std::vector<double> adjoint_line(const std::vector<double>& line) const;
    Extent extent_;
    std::vector<double> taps_;
};

// Chain of operators applied first-to-last.
class CompositeOp final : public LinearOperator {
public:
    explicit CompositeOp(std::vector<std::shared_ptr<const LinearOperator>> stages);
    Extent in_shape() const override { return stages_.front()->in_shape(); }
    Extent out_shape() const override { return stages_.back()->out_shape(); }
    std::string describe() const override;
    ThermalImage forward(const ThermalImage& x) const override;
    ThermalImage adjoint(const ThermalImage& v) const override;

private:
    std::vector<std::shared_ptr<const LinearOperator>> stages_;
};

// Additive noise on the measurement: iid Gaussian plus fixed pattern
// stripes. The stripe realization is a pure function of (fpn_seed, extent).
struct NoiseModel {
    double gaussian_sigma = 0.0;
    double fpn_column_sigma = 0.0;
    double fpn_row_sigma = 0.0;
    std::uint64_t fpn_seed = 0;

    void validate() const;
};

// Column/row offset field realized from (seed, extent) only.
ThermalImage fixed_pattern_noise(const NoiseModel& noise, Extent extent);

// y = A x + g + f  (Gaussian g from rng, stripes f from fpn_seed).
ThermalImage degrade(const ThermalImage& x, const LinearOperator& op,
                     const NoiseModel& noise, SeededRng& rng);

// Conjugate gradients for s.p.d. systems given as a matrix-free apply.
// Throws NumericError if the relative residual fails to reach tol.
std::vector<double> conjugate_gradient(
    const std::function<std::vector<double>(const std::vector<double>&)>& apply,
    const std::vector<double>& rhs, double tol, int max_iters);

}  // namespace tdiff
