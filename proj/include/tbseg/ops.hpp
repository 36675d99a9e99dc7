#pragma once

#include <vector>

#include "tbseg/rng.hpp"
#include "tbseg/tensor.hpp"

// Forward and backward kernels for the fixed layer vocabulary. All tensors
// are NCHW f32. Every forward kernel validates input shapes and checks its
// output for non-finite values. Reduction orders are fixed, so results are
// bit-identical across runs for the same inputs.
namespace tbseg::ops {

// 2D convolution, stride 1, square kernel of odd size (1 or 3), zero
// padding k/2 so spatial extents are preserved.
// input (N, Cin, H, W), weight (Cout, Cin, K, K), bias (Cout).
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias);
void conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& grad_out,
                     Tensor& grad_input, Tensor& grad_weight, Tensor& grad_bias);

Tensor relu_forward(const Tensor& input);
void relu_backward(const Tensor& input, const Tensor& grad_out, Tensor& grad_input);

// 2x2 max pooling, stride 2. Spatial extents must be even. Ties resolve to
// the first maximum in row-major scan order within the window.
Tensor maxpool2x2_forward(const Tensor& input, std::vector<uint32_t>& argmax);
void maxpool2x2_backward(const std::vector<uint32_t>& argmax, const Tensor& grad_out,
                         Tensor& grad_input);

Tensor upsample_nearest2x_forward(const Tensor& input);
void upsample_nearest2x_backward(const Tensor& grad_out, Tensor& grad_input);

// Batch normalization over (N, H, W) per channel.
struct BatchNormContext {
  std::vector<float> mean;     // per-channel statistics used to normalize
  std::vector<float> inv_std;  // 1 / sqrt(var + eps)
  bool train_mode = false;
};

// Train mode computes batch statistics (biased variance for normalization)
// and, when `momentum > 0`, folds them into the running buffers:
//   running <- (1 - momentum) * running + momentum * batch_stat
// with the unbiased variance for the running update and the running
// variance floored at `eps`. Eval mode is a fixed affine map using the
// running statistics.
Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         Tensor& running_mean, Tensor& running_var, bool train_mode,
                         float momentum, float eps, BatchNormContext& ctx);
void batchnorm_backward(const Tensor& input, const Tensor& gamma, const BatchNormContext& ctx,
                        const Tensor& grad_out, Tensor& grad_input, Tensor& grad_gamma,
                        Tensor& grad_beta);

// Inverted dropout: kept activations are scaled by 1/(1-p) so eval mode is
// the identity. p == 0 is the identity and does not consume randomness.
Tensor dropout_forward(const Tensor& input, float p, Rng& rng, std::vector<float>& mask);
void dropout_backward(const std::vector<float>& mask, const Tensor& grad_out, Tensor& grad_input);

// Numerically stable softmax over the channel dimension, per (n, h, w).
Tensor softmax_channels_forward(const Tensor& input);
void softmax_channels_backward(const Tensor& output, const Tensor& grad_out, Tensor& grad_input);

// Concatenation along the channel dimension.
Tensor concat_channels_forward(const Tensor& a, const Tensor& b);
void concat_channels_backward(size_t channels_a, const Tensor& grad_out, Tensor& grad_a,
                              Tensor& grad_b);

}  // namespace tbseg::ops
