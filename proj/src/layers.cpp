#include "celd/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace celd::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace {

// cols is (in_ch*k*k) x (oh*ow) for one sample.
void im2col(const double* x, int C, int H, int W, int k, int stride, int pad, double* cols) {
    const int oh = conv_out_dim(H, k, stride, pad);
    const int ow = conv_out_dim(W, k, stride, pad);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::size_t r = 0;
    for (int ci = 0; ci < C; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++r) {
                double* out = cols + r * static_cast<std::size_t>(oh) * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) {
                        std::fill(out, out + ow, 0.0);
                        out += ow;
                        continue;
                    }
                    const double* row = x + ci * plane + static_cast<std::size_t>(iy) * W;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        *out++ = (ix < 0 || ix >= W) ? 0.0 : row[ix];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* cols, int C, int H, int W, int k, int stride, int pad, double* dx) {
    const int oh = conv_out_dim(H, k, stride, pad);
    const int ow = conv_out_dim(W, k, stride, pad);
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    std::size_t r = 0;
    for (int ci = 0; ci < C; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx, ++r) {
                const double* in = cols + r * static_cast<std::size_t>(oh) * ow;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) {
                        in += ow;
                        continue;
                    }
                    double* row = dx + ci * plane + static_cast<std::size_t>(iy) * W;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < W) row[ix] += in[ox];
                    }
                    in += ow;
                }
            }
        }
    }
}

}  // namespace

void conv_forward(const Tensor4& x, int ch_begin, const ConvSpec& spec, const Param& w, Tensor4& y) {
    const int oh = conv_out_dim(x.h, spec.k, spec.stride, spec.pad);
    const int ow = conv_out_dim(x.w, spec.k, spec.stride, spec.pad);
    y = Tensor4(x.n, spec.out_ch, oh, ow);
    const int K = spec.in_ch * spec.k * spec.k;
    const int M = oh * ow;
    std::vector<double> cols(static_cast<std::size_t>(K) * M);
    CMapMat wmat(w.data.data(), spec.out_ch, K);
    for (int i = 0; i < x.n; ++i) {
        const double* xs = x.sample(i) + static_cast<std::size_t>(ch_begin) * x.plane();
        im2col(xs, spec.in_ch, x.h, x.w, spec.k, spec.stride, spec.pad, cols.data());
        CMapMat cmat(cols.data(), K, M);
        MapMat ymat(y.sample(i), spec.out_ch, M);
        ymat.noalias() = wmat * cmat;
    }
}

void conv_backward(const Tensor4& x, int ch_begin, const ConvSpec& spec, Param& w,
                   const Tensor4& dy, Tensor4* dx) {
    const int oh = dy.h, ow = dy.w;
    const int K = spec.in_ch * spec.k * spec.k;
    const int M = oh * ow;
    std::vector<double> cols(static_cast<std::size_t>(K) * M);
    std::vector<double> dcols(static_cast<std::size_t>(K) * M);
    CMapMat wmat(w.data.data(), spec.out_ch, K);
    MapMat gwmat(w.grad.data(), spec.out_ch, K);
    for (int i = 0; i < x.n; ++i) {
        const double* xs = x.sample(i) + static_cast<std::size_t>(ch_begin) * x.plane();
        im2col(xs, spec.in_ch, x.h, x.w, spec.k, spec.stride, spec.pad, cols.data());
        CMapMat cmat(cols.data(), K, M);
        CMapMat dymat(dy.sample(i), spec.out_ch, M);
        gwmat.noalias() += dymat * cmat.transpose();
        if (dx) {
            MapMat dcmat(dcols.data(), K, M);
            dcmat.noalias() = wmat.transpose() * dymat;
            double* dxs = dx->sample(i) + static_cast<std::size_t>(ch_begin) * dx->plane();
            col2im_add(dcols.data(), spec.in_ch, x.h, x.w, spec.k, spec.stride, spec.pad, dxs);
        }
    }
}

void bn_relu_forward(const Tensor4& x, int ch_begin, int ch, const Param& gamma, const Param& beta,
                     Buffer& running_mean, Buffer& running_var, bool training, double momentum,
                     double eps, Tensor4& y, BnCache* cache) {
    y = Tensor4(x.n, ch, x.h, x.w);
    const std::size_t plane = x.plane();
    const std::size_t count = static_cast<std::size_t>(x.n) * plane;
    if (cache) {
        cache->xhat = Tensor4(x.n, ch, x.h, x.w);
        cache->inv_std.assign(ch, 0.0);
    }
    for (int c = 0; c < ch; ++c) {
        double mean, inv_std;
        if (training) {
            double sum = 0.0, sumsq = 0.0;
            for (int i = 0; i < x.n; ++i) {
                const double* p = x.sample(i) + (ch_begin + c) * plane;
                for (std::size_t j = 0; j < plane; ++j) {
                    sum += p[j];
                    sumsq += p[j] * p[j];
                }
            }
            mean = sum / count;
            double var = sumsq / count - mean * mean;
            if (var < 0.0) var = 0.0;  // numeric guard
            inv_std = 1.0 / std::sqrt(var + eps);
            const double unbiased = count > 1 ? var * count / (count - 1.0) : var;
            running_mean.data[c] = (1.0 - momentum) * running_mean.data[c] + momentum * mean;
            running_var.data[c] = (1.0 - momentum) * running_var.data[c] + momentum * unbiased;
        } else {
            mean = running_mean.data[c];
            inv_std = 1.0 / std::sqrt(running_var.data[c] + eps);
        }
        if (cache) cache->inv_std[c] = inv_std;
        const double g = gamma.data[c], b = beta.data[c];
        for (int i = 0; i < x.n; ++i) {
            const double* p = x.sample(i) + (ch_begin + c) * plane;
            double* q = y.sample(i) + c * plane;
            double* xh = cache ? cache->xhat.sample(i) + c * plane : nullptr;
            for (std::size_t j = 0; j < plane; ++j) {
                const double xhat = (p[j] - mean) * inv_std;
                if (xh) xh[j] = xhat;
                const double val = g * xhat + b;
                q[j] = val > 0.0 ? val : 0.0;
            }
        }
    }
}

void bn_relu_backward(const Tensor4& y, const BnCache& cache, Param& gamma, Param& beta,
                      const Tensor4& dy, Tensor4* dx, int ch_begin) {
    const int ch = y.c;
    const std::size_t plane = y.plane();
    const double count = static_cast<double>(y.n) * plane;
    for (int c = 0; c < ch; ++c) {
        // Pass 1: mask dy through ReLU, accumulate the BN reduction terms.
        double sum_d = 0.0, sum_dx = 0.0;
        for (int i = 0; i < y.n; ++i) {
            const double* yo = y.sample(i) + c * plane;
            const double* dyp = dy.sample(i) + c * plane;
            const double* xh = cache.xhat.sample(i) + c * plane;
            for (std::size_t j = 0; j < plane; ++j) {
                const double d = yo[j] > 0.0 ? dyp[j] : 0.0;
                sum_d += d;
                sum_dx += d * xh[j];
            }
        }
        gamma.grad[c] += sum_dx;
        beta.grad[c] += sum_d;
        if (!dx) continue;
        const double g = gamma.data[c];
        const double inv_std = cache.inv_std[c];
        const double k1 = g * inv_std;
        for (int i = 0; i < y.n; ++i) {
            const double* yo = y.sample(i) + c * plane;
            const double* dyp = dy.sample(i) + c * plane;
            const double* xh = cache.xhat.sample(i) + c * plane;
            double* dq = dx->sample(i) + (ch_begin + c) * plane;
            for (std::size_t j = 0; j < plane; ++j) {
                const double d = yo[j] > 0.0 ? dyp[j] : 0.0;
                dq[j] += k1 * (d - sum_d / count - xh[j] * sum_dx / count);
            }
        }
    }
}

void maxpool_forward(const Tensor4& x, int k, int stride, int pad, Tensor4& y, MaxPoolCache* cache) {
    const int oh = conv_out_dim(x.h, k, stride, pad);
    const int ow = conv_out_dim(x.w, k, stride, pad);
    y = Tensor4(x.n, x.c, oh, ow);
    if (cache) cache->argmax.assign(y.size(), -1);
    std::size_t o = 0;
    for (int i = 0; i < x.n; ++i) {
        for (int c = 0; c < x.c; ++c) {
            const double* xp = x.sample(i) + c * x.plane();
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox, ++o) {
                    double best = -std::numeric_limits<double>::infinity();
                    int besti = -1;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= x.h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= x.w) continue;
                            const int idx = iy * x.w + ix;
                            if (xp[idx] > best) {
                                best = xp[idx];
                                besti = idx;
                            }
                        }
                    }
                    y.v[o] = best;
                    if (cache) {
                        cache->argmax[o] =
                            static_cast<int>(i * x.sample_stride() + c * x.plane()) + besti;
                    }
                }
            }
        }
    }
}

void maxpool_backward(const MaxPoolCache& cache, const Tensor4& dy, Tensor4& dx) {
    for (std::size_t o = 0; o < dy.size(); ++o) dx.v[cache.argmax[o]] += dy.v[o];
}

void avgpool2_forward(const Tensor4& x, Tensor4& y) {
    const int oh = x.h / 2, ow = x.w / 2;
    y = Tensor4(x.n, x.c, oh, ow);
    for (int i = 0; i < x.n; ++i) {
        for (int c = 0; c < x.c; ++c) {
            const double* xp = x.sample(i) + c * x.plane();
            double* yp = y.sample(i) + c * y.plane();
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const int iy = oy * 2, ix = ox * 2;
                    yp[oy * ow + ox] = 0.25 * (xp[iy * x.w + ix] + xp[iy * x.w + ix + 1] +
                                               xp[(iy + 1) * x.w + ix] + xp[(iy + 1) * x.w + ix + 1]);
                }
            }
        }
    }
}

void avgpool2_backward(const Tensor4& dy, Tensor4& dx) {
    const int oh = dy.h, ow = dy.w;
    for (int i = 0; i < dy.n; ++i) {
        for (int c = 0; c < dy.c; ++c) {
            const double* dyp = dy.sample(i) + c * dy.plane();
            double* dxp = dx.sample(i) + c * dx.plane();
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const double d = 0.25 * dyp[oy * ow + ox];
                    const int iy = oy * 2, ix = ox * 2;
                    dxp[iy * dx.w + ix] += d;
                    dxp[iy * dx.w + ix + 1] += d;
                    dxp[(iy + 1) * dx.w + ix] += d;
                    dxp[(iy + 1) * dx.w + ix + 1] += d;
                }
            }
        }
    }
}

void gap_forward(const Tensor4& x, Matrix& y) {
    y = Matrix(x.n, x.c);
    const double inv = 1.0 / static_cast<double>(x.plane());
    for (int i = 0; i < x.n; ++i) {
        for (int c = 0; c < x.c; ++c) {
            const double* xp = x.sample(i) + c * x.plane();
            double s = 0.0;
            for (std::size_t j = 0; j < x.plane(); ++j) s += xp[j];
            y.at(i, c) = s * inv;
        }
    }
}

void gap_backward(const Matrix& dy, Tensor4& dx) {
    const double inv = 1.0 / static_cast<double>(dx.plane());
    for (int i = 0; i < dy.rows; ++i) {
        for (int c = 0; c < dy.cols; ++c) {
            const double d = dy.at(i, c) * inv;
            double* dxp = dx.sample(i) + c * dx.plane();
            for (std::size_t j = 0; j < dx.plane(); ++j) dxp[j] += d;
        }
    }
}

void linear_forward(const Matrix& x, const Param& w, const Param& b, Matrix& y) {
    const int out = static_cast<int>(b.data.size());
    y = Matrix(x.rows, out);
    CMapMat xm(x.v.data(), x.rows, x.cols);
    CMapMat wm(w.data.data(), out, x.cols);
    MapMat ym(y.v.data(), x.rows, out);
    ym.noalias() = xm * wm.transpose();
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < out; ++j) y.at(i, j) += b.data[j];
}

void linear_backward(const Matrix& x, Param& w, Param& b, const Matrix& dy, Matrix& dx) {
    const int out = dy.cols;
    CMapMat xm(x.v.data(), x.rows, x.cols);
    CMapMat dym(dy.v.data(), dy.rows, dy.cols);
    CMapMat wm(w.data.data(), out, x.cols);
    MapMat gwm(w.grad.data(), out, x.cols);
    gwm.noalias() += dym.transpose() * xm;
    for (int i = 0; i < dy.rows; ++i)
        for (int j = 0; j < out; ++j) b.grad[j] += dy.at(i, j);
    dx = Matrix(x.rows, x.cols);
    MapMat dxm(dx.v.data(), dx.rows, dx.cols);
    dxm.noalias() = dym * wm;
}

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        const double* z = logits.row(i);
        double m = z[0];
        for (int j = 1; j < logits.cols; ++j) m = std::max(m, z[j]);
        double s = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            p.at(i, j) = std::exp(z[j] - m);
            s += p.at(i, j);
        }
        for (int j = 0; j < logits.cols; ++j) p.at(i, j) /= s;
    }
    return p;
}

double softmax_xent(const Matrix& logits, const std::vector<int>& target_idx,
                    const std::vector<double>& class_weights, Matrix& dlogits) {
    if (static_cast<int>(target_idx.size()) != logits.rows)
        throw std::invalid_argument("softmax_xent: target count does not match batch");
    Matrix p = softmax(logits);
    dlogits = Matrix(logits.rows, logits.cols);
    double loss = 0.0, wsum = 0.0;
    for (int i = 0; i < logits.rows; ++i) {
        const int t = target_idx[i];
        const double wgt = class_weights.empty() ? 1.0 : class_weights.at(t);
        loss += -wgt * std::log(std::max(p.at(i, t), 1e-12));
        wsum += wgt;
    }
    for (int i = 0; i < logits.rows; ++i) {
        const int t = target_idx[i];
        const double wgt = class_weights.empty() ? 1.0 : class_weights.at(t);
        for (int j = 0; j < logits.cols; ++j) {
            dlogits.at(i, j) = wgt * (p.at(i, j) - (j == t ? 1.0 : 0.0)) / wsum;
        }
    }
    return loss / wsum;
}

}  // namespace celd::nn
