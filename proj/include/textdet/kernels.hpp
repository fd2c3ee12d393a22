#pragma once

#include <cstdint>
#include <vector>

#include "textdet/tensor.hpp"

namespace textdet {

// Forward/backward kernels for the closed layer set the detection network
// needs. Inputs are per-sample [C,H,W] or batched [B,C,H,W]; batch handling
// loops over samples in fixed order, so everything stays deterministic.

/// Cross-correlation. kernel [N,C,kh,kw], bias [N] (empty = no bias).
/// Output side must divide exactly: (H + 2*pad - ext) % stride == 0.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
                      int pad, int dilation = 1);

struct Conv2dGrads {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                            int stride, int pad, int dilation = 1);

/// Transposed convolution (the linear adjoint of conv2d_forward with the same
/// kernel buffer). kernel [C_in, C_out, kh, kw]; output side (H-1)*stride + kh.
/// UpSample(n) in the network is the kh == kw == stride == n case.
Tensor deconv2d_forward(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride);

struct Deconv2dGrads {
  Tensor input;
  Tensor kernel;
  Tensor bias;
};
Deconv2dGrads deconv2d_backward(const Tensor& input, const Tensor& kernel, const Tensor& grad_out,
                                int stride);

Tensor relu_forward(const Tensor& x);
/// y must be the forward output (its sign pattern selects the pass-through).
Tensor relu_backward(const Tensor& grad_out, const Tensor& y);

Tensor sigmoid_forward(const Tensor& x);
Tensor sigmoid_backward(const Tensor& grad_out, const Tensor& y);

struct BnCache {
  Tensor xhat;
  std::vector<float> invstd;
};

/// Per-channel normalization over batch x spatial. Training mode updates the
/// running statistics in place (r = momentum*r + (1-momentum)*batch) and fills
/// `cache` for the backward pass; inference mode uses the running statistics.
Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         Tensor& running_mean, Tensor& running_var, bool training, float eps,
                         float momentum, BnCache* cache);

struct BnGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};
BnGrads batchnorm_backward(const Tensor& grad_out, const Tensor& gamma, const BnCache& cache);

struct PoolCache {
  std::vector<int32_t> argmax;
  std::vector<int> in_shape;
};

/// 2x2 max pooling with stride 2; spatial dims must be even.
Tensor maxpool2d_forward(const Tensor& x, PoolCache* cache);
Tensor maxpool2d_backward(const Tensor& grad_out, const PoolCache& cache);

/// v <- momentum*v + grad + weight_decay*value; value <- value - lr*v;
/// gradients are zeroed afterwards.
void sgd_step(const std::vector<ParamBlock*>& params, float lr, float momentum,
              float weight_decay);

}  // namespace textdet
