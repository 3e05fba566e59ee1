#include "avnet/losses.hpp"

#include <cmath>
#include <string>

#include "avnet/ops.hpp"

namespace avnet {

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss.alpha must lie in [0, 1]");
  if (!(gamma >= 0.0)) throw ConfigError("loss.gamma must be non-negative");
  if (!(dice_smooth > 0.0)) throw ConfigError("loss.dice_smooth must be positive");
  if (!(prob_clamp > 0.0 && prob_clamp < 0.5)) {
    throw ConfigError("loss.prob_clamp must lie in (0, 0.5)");
  }
}

namespace {

void check_shapes(const char* name, const Tensor& pred, const Tensor& target) {
  if (pred.rank() != 4) {
    throw ShapeError(std::string(name) + ": expected N x L x H x W prediction, got " +
                     pred.shape().str());
  }
  if (pred.shape() != target.shape()) {
    throw ShapeError(std::string(name) + ": prediction " + pred.shape().str() + " and target " +
                     target.shape().str() + " differ");
  }
  if (pred.dtype() != target.dtype()) throw ShapeError(std::string(name) + ": dtype mismatch");
}

void check_one_hot(const Tensor& target) {
  const std::int64_t N = target.dim(0), L = target.dim(1), HW = target.dim(2) * target.dim(3);
  dispatch(target.dtype(), [&]<typename T>() {
    auto g = target.data<T>();
    for (std::int64_t n = 0; n < N; ++n) {
      for (std::int64_t i = 0; i < HW; ++i) {
        if (L == 1) {
          const T v = g[n * HW + i];
          if (v != T(0) && v != T(1)) {
            throw std::invalid_argument("dice_loss: single-class target must be a binary mask");
          }
          continue;
        }
        double sum = 0.0;
        for (std::int64_t l = 0; l < L; ++l) sum += g[(n * L + l) * HW + i];
        if (std::abs(sum - 1.0) > 1e-6) {
          throw std::invalid_argument("dice_loss: target is not one-hot at sample " +
                                      std::to_string(n) + ", pixel " + std::to_string(i) +
                                      " (class sum " + std::to_string(sum) + ")");
        }
      }
    }
  });
}

}  // namespace

Tensor dice_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg) {
  cfg.validate();
  check_shapes("dice_loss", pred, target);
  check_one_hot(target);
  const double s = cfg.dice_smooth;
  const auto classes = static_cast<double>(pred.dim(1));

  Tensor overlap = ops::channel_sum(ops::mul(pred, target));
  Tensor pred_sq = ops::channel_sum(ops::pow_scalar(pred, 2.0));
  Tensor target_sq = ops::channel_sum(ops::pow_scalar(target, 2.0));
  Tensor numerator = ops::add(ops::mul(overlap, 2.0), s);
  Tensor denominator = ops::add(ops::add(pred_sq, target_sq), s);
  Tensor score = ops::mul(ops::sum_all(ops::div(numerator, denominator)), 1.0 / classes);
  return ops::rsub(1.0, score);
}

Tensor focal_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg) {
  cfg.validate();
  check_shapes("focal_loss", pred, target);
  const double c = cfg.prob_clamp;

  Tensor p = ops::clamp(pred, c, 1.0 - c);
  Tensor q = ops::rsub(1.0, p);
  Tensor positive = ops::mul(ops::mul(ops::pow_scalar(q, cfg.gamma), target), ops::log(p));
  Tensor negative =
      ops::mul(ops::mul(ops::pow_scalar(p, cfg.gamma), ops::rsub(1.0, target)), ops::log(q));
  Tensor total = ops::add(ops::mul(positive, cfg.alpha), ops::mul(negative, 1.0 - cfg.alpha));
  return ops::mul(ops::sum_all(total), -1.0);
}

Tensor compound_loss(const Tensor& pred, const Tensor& target, const LossConfig& cfg) {
  return ops::add(dice_loss(pred, target, cfg), focal_loss(pred, target, cfg));
}

}  // namespace avnet
