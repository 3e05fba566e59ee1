#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "avnet/parameter_store.hpp"

namespace avnet {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment estimates for every trainable tensor of a store.
class AdamState {
 public:
  AdamState(const ParameterStore& store, AdamOptions options = {});

  const AdamOptions& options() const { return options_; }
  std::int64_t step_count() const { return step_count_; }
  const Tensor& first_moment(const std::string& name) const;
  const Tensor& second_moment(const std::string& name) const;
  std::size_t size() const { return moments_.size(); }

 private:
  friend void adam_step(ParameterStore& params, AdamState& state);

  struct Moments {
    Tensor m;
    Tensor v;
  };
  AdamOptions options_;
  std::int64_t step_count_ = 0;
  std::map<std::string, Moments> moments_;
};

// One bias-corrected Adam update of every trainable tensor, in place, then
// clears the gradients. Throws ParameterError naming the first trainable
// tensor without a gradient; nothing is updated in that case.
void adam_step(ParameterStore& params, AdamState& state);

}  // namespace avnet
