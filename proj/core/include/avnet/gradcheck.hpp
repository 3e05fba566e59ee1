#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "avnet/tensor.hpp"

namespace avnet {

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  std::int64_t checked = 0;  // elements compared
  std::int64_t skipped = 0;  // sampled points sitting on a kink
  bool complete = true;      // enough smooth points were found

  bool passed() const { return complete && max_rel_error < tolerance; }
};

struct GradcheckOptions {
  double step = 1e-4;
  double batch_norm_step = 1e-3;
  // Smaller for the model: with ~100 ReLUs in the graph a wider step tends to
  // straddle a kink.
  double model_step = 1e-6;
  int model_batch = 4;
  // Relative disagreement of the one-sided slopes above which a sampled
  // model parameter is treated as sitting on a kink and resampled.
  double kink_threshold = 1e-3;
  // Per input tensor; larger inputs are sampled.
  int max_elements_per_input = 48;
  // Parameter elements sampled from the end-to-end model.
  int model_samples = 120;
};

// |a - n| / max(|a|, |n|, 1e-3).
double gradcheck_rel_error(double analytic, double numeric);

using GradFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares tape gradients of sum(f(inputs) * w), w random, against central
// differences. Inputs must be float64 leaves; they are flagged requires_grad
// here.
GradcheckResult check_gradient(const std::string& name, const GradFn& f, std::vector<Tensor> inputs,
                               double tolerance, std::mt19937_64& rng,
                               const GradcheckOptions& options = {});

// Every differentiable op, both losses and a tiny end-to-end model.
std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed,
                                           const GradcheckOptions& options = {});

}  // namespace avnet
