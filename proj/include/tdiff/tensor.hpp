#pragma once

#include <vector>

namespace tdiff {

// Dense NCHW tensor of doubles. Training math runs in double precision so
// analytic gradients can be validated against finite differences at tight
// tolerances; checkpoints store float32.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0) {}

    size_t size() const { return data.size(); }
    size_t plane() const { return static_cast<size_t>(h) * w; }

    double& at(int in, int ic, int iy, int ix) {
        return data[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    double at(int in, int ic, int iy, int ix) const {
        return data[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }

    double* plane_ptr(int in, int ic) {
        return data.data() + (static_cast<size_t>(in) * c + ic) * plane();
    }
    const double* plane_ptr(int in, int ic) const {
        return data.data() + (static_cast<size_t>(in) * c + ic) * plane();
    }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

// Row-major matrix [rows, cols] for time-embedding vectors.
struct Matrix {
    int rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c_) { return data[static_cast<size_t>(r) * cols + c_]; }
    double at(int r, int c_) const { return data[static_cast<size_t>(r) * cols + c_]; }
};

}  // namespace tdiff
