#pragma once

#include <cstdint>

#include "avnet/autodiff.hpp"
#include "avnet/tensor.hpp"

// Forward kernels with reverse-mode rules. Every op records itself on the
// current tape when one is installed and an input requires a gradient.
// Layout is NCHW throughout.
namespace avnet::ops {

// Cross-correlation (no kernel flip) with zero padding. bias may be undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride = 1,
              int padding = 0);

enum class Mode { train, eval };

struct BatchNormOptions {
  double eps = 1e-5;
  // running = momentum * running + (1 - momentum) * batch
  double momentum = 0.9;
};

// Per-channel normalization over N*H*W. Train mode normalizes with the batch
// statistics (population variance) and updates the running buffers in place;
// eval mode reads the running buffers only.
Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                    Tensor& running_mean, Tensor& running_var, Mode mode,
                    const BatchNormOptions& options = {});

Tensor relu(const Tensor& input);

// Softmax across the channel axis of an N x C x H x W tensor, per pixel.
Tensor softmax_channels(const Tensor& input);

// 2x2 window, stride 2. Requires even H and W.
Tensor avg_pool2d(const Tensor& input);

Tensor upsample_nearest2x(const Tensor& input);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& input, std::int64_t begin, std::int64_t count);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor mul(const Tensor& a, double b);
// b - a
Tensor rsub(double b, const Tensor& a);

// Natural log. Throws DomainError on non-positive input; callers that need
// stability clamp first.
Tensor log(const Tensor& a);
Tensor pow_scalar(const Tensor& a, double exponent);
Tensor clamp(const Tensor& a, double lo, double hi);

// Rank-0 sum of all elements.
Tensor sum_all(const Tensor& a);
// N x C x H x W -> C, summing over batch and space.
Tensor channel_sum(const Tensor& input);

}  // namespace avnet::ops
