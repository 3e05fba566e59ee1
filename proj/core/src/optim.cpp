#include "avnet/optim.hpp"

#include <cmath>

namespace avnet {

AdamState::AdamState(const ParameterStore& store, AdamOptions options) : options_(options) {
  if (!(options_.lr > 0.0 && options_.beta1 >= 0.0 && options_.beta1 < 1.0 &&
        options_.beta2 >= 0.0 && options_.beta2 < 1.0 && options_.eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  for (const auto& e : store.entries()) {
    if (!e.trainable) continue;
    moments_.emplace(e.name, Moments{Tensor::zeros(e.tensor.shape(), DType::float64),
                                     Tensor::zeros(e.tensor.shape(), DType::float64)});
  }
}

const Tensor& AdamState::first_moment(const std::string& name) const {
  auto it = moments_.find(name);
  if (it == moments_.end()) throw ParameterError("no Adam state for '" + name + "'");
  return it->second.m;
}

const Tensor& AdamState::second_moment(const std::string& name) const {
  auto it = moments_.find(name);
  if (it == moments_.end()) throw ParameterError("no Adam state for '" + name + "'");
  return it->second.v;
}

void adam_step(ParameterStore& params, AdamState& state) {
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    if (!state.moments_.contains(e.name)) {
      throw ParameterError("parameter '" + e.name + "' has no Adam state");
    }
    if (!e.tensor.has_grad()) {
      throw ParameterError("parameter '" + e.name + "' has no gradient");
    }
  }

  const AdamOptions& o = state.options_;
  const auto t = static_cast<double>(state.step_count_ + 1);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);

  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    auto& mom = state.moments_.at(e.name);
    auto m = mom.m.data<double>();
    auto v = mom.v.data<double>();
    const Tensor grad = e.tensor.grad();
    Tensor param = e.tensor;
    dispatch(param.dtype(), [&]<typename T>() {
      auto theta = param.data<T>();
      auto g = grad.data<T>();
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = g[i];
        m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
        v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
        const double m_hat = m[i] / correction1;
        const double v_hat = v[i] / correction2;
        theta[i] = static_cast<T>(theta[i] - o.lr * m_hat / (std::sqrt(v_hat) + o.eps));
      }
    });
    param.clear_grad();
  }
  ++state.step_count_;
}

}  // namespace avnet
