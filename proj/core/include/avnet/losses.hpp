#pragma once

#include "avnet/tensor.hpp"

namespace avnet {

struct LossConfig {
  double alpha = 0.25;
  double gamma = 2.0;
  double dice_smooth = 1e-6;
  double prob_clamp = 1e-7;

  // Throws ConfigError naming the violated constraint.
  void validate() const;
};

// Inputs are N x L x H x W: pred holds per-pixel class probabilities, target
// the one-hot labels. With L == 1 the target is a binary mask instead.

// Mean over classes of 1 - (2*sum(p*g) + s) / (sum(p^2) + sum(g^2) + s), with
// sums taken over every pixel of the batch.
Tensor dice_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg = {});

// -sum over pixels and classes of
//   alpha (1-p)^gamma g ln p + (1-alpha) p^gamma (1-g) ln(1-p)
// with p clamped to [prob_clamp, 1 - prob_clamp]. Not normalized by pixel count.
Tensor focal_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg = {});

// dice_loss + focal_loss.
Tensor compound_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg = {});

}  // namespace avnet
