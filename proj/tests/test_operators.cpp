#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tdiff/errors.hpp"
#include "tdiff/operators.hpp"
#include "tdiff/rng.hpp"

using namespace tdiff;

namespace {

ThermalImage random_image(int w, int h, SeededRng& rng) {
    ThermalImage img(w, h, ValueDomain::Normalized);
    for (double& v : img.data) v = 2.0 * rng.uniform() - 1.0;
    return img;
}

double inner(const ThermalImage& a, const ThermalImage& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

void check_adjoint_identity(const LinearOperator& op, int pairs, SeededRng& rng) {
    const Extent in = op.in_shape(), out = op.out_shape();
    for (int k = 0; k < pairs; ++k) {
        const ThermalImage u = random_image(in.width, in.height, rng);
        const ThermalImage v = random_image(out.width, out.height, rng);
        const double lhs = inner(op.forward(u), v);
        const double rhs = inner(u, op.adjoint(v));
        CHECK(std::abs(lhs - rhs) <= 1e-10);
    }
}

}  // namespace

TEST_CASE("identity operator passes inputs through") {
    const IdentityOp op({4, 4});
    SeededRng rng(1);
    const ThermalImage x = random_image(4, 4, rng);
    CHECK(op.forward(x).data == x.data);
    CHECK(op.adjoint(x).data == x.data);
}

TEST_CASE("box downsample takes block means") {
    const BoxDownsample op({4, 4}, 2);
    const ThermalImage x(4, 4, ValueDomain::Normalized, 8.0);
    const ThermalImage y = op.forward(x);
    CHECK(y.width == 2);
    CHECK(y.height == 2);
    for (double v : y.data) CHECK(v == 8.0);
}

TEST_CASE("box downsample adjoint spreads with the transposed weights") {
    const BoxDownsample op({2, 2}, 2);
    ThermalImage v(1, 1, ValueDomain::Normalized, 1.0);
    const ThermalImage u = op.adjoint(v);
    for (double val : u.data) CHECK(val == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("gaussian blur of a centered impulse is the outer product of taps") {
    const std::vector<double> taps = {0.25, 0.5, 0.25};
    const GaussianBlur op({5, 5}, taps);
    ThermalImage x(5, 5, ValueDomain::Normalized);
    x.at(2, 2) = 1.0;
    const ThermalImage y = op.forward(x);
    const ThermalImage expect = oracle::dense_separable_blur(x, taps);
    for (size_t i = 0; i < y.data.size(); ++i)
        CHECK(y.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-14));
    CHECK(y.at(2, 2) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(y.at(1, 2) == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(y.at(1, 1) == doctest::Approx(0.0625).epsilon(1e-15));
}

TEST_CASE("gaussian blur matches the dense reflect-convolution oracle on random images") {
    SeededRng rng(2);
    const std::vector<double> taps = GaussianBlur::gaussian_taps(5, 1.0);
    const GaussianBlur op({8, 6}, taps);
    for (int k = 0; k < 20; ++k) {
        const ThermalImage x = random_image(8, 6, rng);
        const ThermalImage y = op.forward(x);
        const ThermalImage expect = oracle::dense_separable_blur(x, taps);
        for (size_t i = 0; i < y.data.size(); ++i)
            CHECK(y.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("adjoint identity holds for all operators") {
    SeededRng rng(3);
    const IdentityOp ident({6, 6});
    const BoxDownsample box2({6, 6}, 2);
    const BoxDownsample box3({6, 6}, 3);
    const GaussianBlur blur({6, 6}, GaussianBlur::gaussian_taps(5, 1.0));
    check_adjoint_identity(ident, 200, rng);
    check_adjoint_identity(box2, 200, rng);
    check_adjoint_identity(box3, 200, rng);
    check_adjoint_identity(blur, 200, rng);

    auto b = std::make_shared<GaussianBlur>(Extent{8, 8}, GaussianBlur::gaussian_taps(3, 0.8));
    auto d = std::make_shared<BoxDownsample>(Extent{8, 8}, 2);
    const CompositeOp comp({b, d});
    check_adjoint_identity(comp, 200, rng);
}

TEST_CASE("adjoint application matches the dense transposed matrix") {
    SeededRng rng(4);
    const BoxDownsample op({6, 6}, 2);
    const auto A = oracle::materialize(op);
    for (int k = 0; k < 10; ++k) {
        const ThermalImage v = random_image(3, 3, rng);
        const ThermalImage u = op.adjoint(v);
        const auto expect = oracle::matvec_t(A, v.data);
        for (size_t i = 0; i < u.data.size(); ++i)
            CHECK(u.data[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
}

TEST_CASE("solve_gram closed forms") {
    SeededRng rng(5);
    const IdentityOp ident({3, 3});
    const ThermalImage r = random_image(3, 3, rng);
    CHECK(ident.solve_gram(r, 0.0).data == r.data);
    const ThermalImage half = ident.solve_gram(r, 1.0);
    for (size_t i = 0; i < r.data.size(); ++i)
        CHECK(half.data[i] == doctest::Approx(r.data[i] / 2.0).epsilon(1e-15));

    const BoxDownsample box({2, 2}, 2);
    ThermalImage one(1, 1, ValueDomain::Normalized, 1.0);
    CHECK(box.solve_gram(one, 0.0).data[0] == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("solve_gram satisfies the residual contract through conjugate gradients") {
    SeededRng rng(6);
    const GaussianBlur blur({6, 6}, GaussianBlur::gaussian_taps(5, 1.0));
    const auto A = oracle::materialize(blur);
    for (const double eta : {0.0, 0.05, 0.5}) {
        const ThermalImage r = random_image(6, 6, rng);
        const ThermalImage w = blur.solve_gram(r, eta);
        // residual (A A^T + eta I) w - r via the dense matrix
        const auto aw = oracle::matvec(A, oracle::matvec_t(A, w.data));
        double rn = 0.0, bn = 0.0;
        for (size_t i = 0; i < r.data.size(); ++i) {
            const double res = aw[i] + eta * w.data[i] - r.data[i];
            rn += res * res;
            bn += r.data[i] * r.data[i];
        }
        CHECK(std::sqrt(rn) <= 1e-10 * std::sqrt(bn));
    }
}

namespace {

// deliberately rank-deficient: both outputs equal the input sum
class SumTwiceOp final : public LinearOperator {
public:
    Extent in_shape() const override { return {2, 1}; }
    Extent out_shape() const override { return {1, 2}; }
    std::string describe() const override { return "sum_twice"; }
    ThermalImage forward(const ThermalImage& x) const override {
        ThermalImage y(1, 2, x.domain);
        y.data[0] = y.data[1] = x.data[0] + x.data[1];
        return y;
    }
    ThermalImage adjoint(const ThermalImage& v) const override {
        ThermalImage u(2, 1, v.domain);
        u.data[0] = u.data[1] = v.data[0] + v.data[1];
        return u;
    }
};

}  // namespace

TEST_CASE("solve_gram reports singular systems at eta = 0") {
    const SumTwiceOp op;
    ThermalImage r(1, 2, ValueDomain::Normalized);
    r.data = {1.0, -1.0};  // orthogonal to the range of A A^T
    CHECK_THROWS_AS(op.solve_gram(r, 0.0), NumericError);
    // regularization restores solvability
    CHECK_NOTHROW(op.solve_gram(r, 0.1));
}

TEST_CASE("degrade with zero noise and identity is the identity") {
    SeededRng rng(7);
    const IdentityOp op({5, 5});
    const ThermalImage x = random_image(5, 5, rng);
    const NoiseModel quiet;
    SeededRng nrng(1);
    CHECK(degrade(x, op, quiet, nrng).data == x.data);
}

TEST_CASE("fixed pattern noise is a pure function of seed and extent") {
    NoiseModel noise;
    noise.fpn_column_sigma = 0.5;
    noise.fpn_row_sigma = 0.25;
    noise.fpn_seed = 42;
    const ThermalImage a = fixed_pattern_noise(noise, {16, 12});
    const ThermalImage b = fixed_pattern_noise(noise, {16, 12});
    CHECK(a.data == b.data);
    noise.fpn_seed = 43;
    const ThermalImage c = fixed_pattern_noise(noise, {16, 12});
    CHECK(a.data != c.data);
}

TEST_CASE("degrade twice with the same fpn seed gives identical stripes") {
    const IdentityOp op({32, 32});
    const ThermalImage zero(32, 32, ValueDomain::Normalized);
    NoiseModel noise;
    noise.fpn_column_sigma = 0.3;
    noise.fpn_seed = 9;
    SeededRng r1(100), r2(100);
    const ThermalImage y1 = degrade(zero, op, noise, r1);
    const ThermalImage y2 = degrade(zero, op, noise, r2);
    CHECK(y1.data == y2.data);
}

TEST_CASE("column FPN is constant down columns and varies across them") {
    const IdentityOp op({64, 64});
    const ThermalImage zero(64, 64, ValueDomain::Normalized);
    NoiseModel noise;
    noise.fpn_column_sigma = 1.0;
    noise.fpn_seed = 11;
    SeededRng rng(0);
    const ThermalImage y = degrade(zero, op, noise, rng);
    // column-constant structure: every sample in a column is bit-identical,
    // so the per-column sample variance across rows is exactly zero
    for (int x = 0; x < 64; ++x)
        for (int yy = 0; yy < 64; ++yy) CHECK(y.at(x, yy) == y.at(x, 0));
    // per-row variance across columns is positive
    for (int yy = 0; yy < 64; ++yy) {
        double mean = 0.0;
        for (int x = 0; x < 64; ++x) mean += y.at(x, yy);
        mean /= 64.0;
        double var = 0.0;
        for (int x = 0; x < 64; ++x) var += (y.at(x, yy) - mean) * (y.at(x, yy) - mean);
        CHECK(var > 0.0);
    }
}

TEST_CASE("shape mismatches are rejected") {
    const BoxDownsample op({4, 4}, 2);
    const ThermalImage wrong(3, 3, ValueDomain::Normalized);
    CHECK_THROWS_AS(op.forward(wrong), DataError);
    CHECK_THROWS_AS(op.adjoint(wrong), DataError);
    CHECK_THROWS_AS(BoxDownsample({5, 5}, 2), DataError);
}
