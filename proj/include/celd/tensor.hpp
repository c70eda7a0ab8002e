#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace celd {

/// Dense N x C x H x W tensor of doubles, row-major with W fastest.
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

    std::size_t size() const { return v.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    std::size_t sample_stride() const { return static_cast<std::size_t>(c) * h * w; }

    double* sample(int i) { return v.data() + i * sample_stride(); }
    const double* sample(int i) const { return v.data() + i * sample_stride(); }

    double& at(int i, int ch, int y, int x) {
        return v[i * sample_stride() + ch * plane() + static_cast<std::size_t>(y) * w + x];
    }
    double at(int i, int ch, int y, int x) const {
        return v[i * sample_stride() + ch * plane() + static_cast<std::size_t>(y) * w + x];
    }

    bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

/// Row-major rows x cols matrix of doubles.
struct Matrix {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
};

}  // namespace celd
