#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "celd/tensor.hpp"

namespace celd::nn {

/// Trainable tensor with its gradient buffer.
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool decay = true;  // weight decay applies (off for biases and norm params)

    std::size_t size() const { return data.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

/// Non-trainable state that still belongs to the model (norm running stats).
struct Buffer {
    std::string name;
    std::vector<double> data;
};

struct ConvSpec {
    int in_ch = 0, out_ch = 0, k = 1, stride = 1, pad = 0;
};

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

/// y = conv(x[:, ch_begin:ch_begin+spec.in_ch], w), no bias.
void conv_forward(const Tensor4& x, int ch_begin, const ConvSpec& spec, const Param& w, Tensor4& y);

/// Accumulates dx into dx[:, ch_begin:...] and adds to w.grad.
void conv_backward(const Tensor4& x, int ch_begin, const ConvSpec& spec, Param& w,
                   const Tensor4& dy, Tensor4* dx);

struct BnCache {
    Tensor4 xhat;
    std::vector<double> inv_std;  // per channel
};

/// Batch normalization over (N,H,W) per channel, followed by ReLU.
/// Reads channels [ch_begin, ch_begin+ch) of x. In training mode batch
/// statistics are used and running stats updated in place.
void bn_relu_forward(const Tensor4& x, int ch_begin, int ch, const Param& gamma, const Param& beta,
                     Buffer& running_mean, Buffer& running_var, bool training, double momentum,
                     double eps, Tensor4& y, BnCache* cache);

/// Backward through ReLU+BN (training mode). dy is the gradient at the ReLU
/// output; y is the forward output (its zeros locate the inactive units).
/// Accumulates into dx channels [ch_begin, ...) and into gamma/beta grads.
void bn_relu_backward(const Tensor4& y, const BnCache& cache, Param& gamma, Param& beta,
                      const Tensor4& dy, Tensor4* dx, int ch_begin);

struct MaxPoolCache {
    std::vector<int> argmax;  // flat input index per output element
};

void maxpool_forward(const Tensor4& x, int k, int stride, int pad, Tensor4& y, MaxPoolCache* cache);
void maxpool_backward(const MaxPoolCache& cache, const Tensor4& dy, Tensor4& dx);

void avgpool2_forward(const Tensor4& x, Tensor4& y);
void avgpool2_backward(const Tensor4& dy, Tensor4& dx);

/// Global average pool (N,C,H,W) -> (N,C).
void gap_forward(const Tensor4& x, Matrix& y);
void gap_backward(const Matrix& dy, Tensor4& dx);

/// y = x * W^T + b with W (out,in).
void linear_forward(const Matrix& x, const Param& w, const Param& b, Matrix& y);
void linear_backward(const Matrix& x, Param& w, Param& b, const Matrix& dy, Matrix& dx);

/// Row-wise softmax.
Matrix softmax(const Matrix& logits);

/// Mean cross-entropy of softmax(logits) against one-hot targets, and the
/// gradient w.r.t. the logits. Optional per-class weights rescale each
/// sample's contribution (mean over weighted samples).
double softmax_xent(const Matrix& logits, const std::vector<int>& target_idx,
                    const std::vector<double>& class_weights, Matrix& dlogits);

}  // namespace celd::nn
