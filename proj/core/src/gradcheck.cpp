#include "avnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "avnet/autodiff.hpp"
#include "avnet/data.hpp"
#include "avnet/losses.hpp"
#include "avnet/nn.hpp"
#include "avnet/ops.hpp"

namespace avnet {

namespace {

constexpr DType f64 = DType::float64;

Tensor uniform(const Shape& shape, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t = Tensor::zeros(shape, f64);
  for (auto& v : t.data<double>()) v = dist(rng);
  return t;
}

// Moves values within margin of point out to point +- margin, keeping finite
// differences away from kinks.
Tensor avoid(Tensor t, double point, double margin) {
  for (auto& v : t.data<double>()) {
    if (std::abs(v - point) < margin) v = v < point ? point - margin : point + margin;
  }
  return t;
}

Tensor random_one_hot(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                      std::mt19937_64& rng) {
  std::uniform_int_distribution<std::int64_t> pick(0, c - 1);
  Tensor t = Tensor::zeros({n, c, h, w}, f64);
  auto d = t.data<double>();
  const std::int64_t hw = h * w;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < hw; ++i) d[(b * c + pick(rng)) * hw + i] = 1.0;
  }
  return t;
}

// Probabilities bounded away from 0 and 1, summing to 1 over channels.
Tensor random_probs(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                    std::mt19937_64& rng) {
  Tensor t = uniform({n, c, h, w}, rng, 0.2, 1.0);
  auto d = t.data<double>();
  const std::int64_t hw = h * w;
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t i = 0; i < hw; ++i) {
      double s = 0.0;
      for (std::int64_t k = 0; k < c; ++k) s += d[(b * c + k) * hw + i];
      for (std::int64_t k = 0; k < c; ++k) d[(b * c + k) * hw + i] /= s;
    }
  }
  return t;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n > limit) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

}  // namespace

double gradcheck_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

GradcheckResult check_gradient(const std::string& name, const GradFn& f, std::vector<Tensor> inputs,
                               double tolerance, std::mt19937_64& rng,
                               const GradcheckOptions& options) {
  for (auto& t : inputs) {
    if (t.dtype() != f64) throw std::invalid_argument("check_gradient: inputs must be float64");
    t.clear_grad();
    t.set_requires_grad(true);
  }

  Tensor projection;
  auto objective = [&]() {
    Tensor out = f(inputs);
    if (!projection.defined()) projection = uniform(out.shape(), rng, 0.5, 1.5);
    return ops::sum_all(ops::mul(out, projection));
  };

  std::vector<Tensor> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = objective();
    tape.backward(loss);
  }
  for (auto& t : inputs) {
    analytic.push_back(t.has_grad() ? t.grad().clone() : Tensor::zeros(t.shape(), f64));
    t.clear_grad();
  }

  GradcheckResult result{name, 0.0, tolerance, 0};
  NoGradGuard no_grad;
  const double h = options.step;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto x = inputs[k].data<double>();
    const auto a = analytic[k].data<double>();
    for (std::size_t i : sample_indices(x.size(), options.max_elements_per_input, rng)) {
      const double saved = x[i];
      x[i] = saved + h;
      const double up = objective().item();
      x[i] = saved - h;
      const double down = objective().item();
      x[i] = saved;
      const double numeric = (up - down) / (2 * h);
      result.max_rel_error = std::max(result.max_rel_error, gradcheck_rel_error(a[i], numeric));
      ++result.checked;
    }
  }
  return result;
}

std::vector<GradcheckResult> run_gradcheck(std::uint64_t seed, const GradcheckOptions& options) {
  std::vector<GradcheckResult> results;
  std::uint64_t stream = 0;
  auto run = [&](const std::string& name, double tol, auto make_inputs, const GradFn& f) {
    std::mt19937_64 rng(derive_seed(seed, ++stream));
    std::vector<Tensor> inputs = make_inputs(rng);
    GradcheckOptions opts = options;
    if (name.starts_with("batch_norm")) opts.step = options.batch_norm_step;
    results.push_back(check_gradient(name, f, std::move(inputs), tol, rng, opts));
  };
  using Inputs = std::vector<Tensor>;
  const double tol = 1e-4;

  run(
      "conv2d", tol,
      [](auto& rng) {
        return Inputs{uniform({2, 3, 5, 5}, rng), uniform({4, 3, 3, 3}, rng), uniform({4}, rng)};
      },
      [](const Inputs& in) { return ops::conv2d(in[0], in[1], in[2], 1, 1); });
  run(
      "conv2d_stride2", tol,
      [](auto& rng) {
        return Inputs{uniform({2, 2, 8, 8}, rng), uniform({3, 2, 7, 7}, rng), uniform({3}, rng)};
      },
      [](const Inputs& in) { return ops::conv2d(in[0], in[1], in[2], 2, 3); });
  run(
      "conv2d_pointwise", tol,
      [](auto& rng) { return Inputs{uniform({2, 4, 3, 3}, rng), uniform({5, 4, 1, 1}, rng)}; },
      [](const Inputs& in) { return ops::conv2d(in[0], in[1], Tensor(), 1, 0); });
  run(
      "batch_norm2d", 1e-3,
      [](auto& rng) {
        return Inputs{uniform({3, 2, 4, 4}, rng), uniform({2}, rng, 0.5, 1.5), uniform({2}, rng)};
      },
      [](const Inputs& in) {
        Tensor mean = Tensor::zeros({2}, f64), var = Tensor::full({2}, 1.0, f64);
        return ops::batch_norm2d(in[0], in[1], in[2], mean, var, ops::Mode::train);
      });
  run(
      "batch_norm2d_eval", 1e-3,
      [](auto& rng) {
        return Inputs{uniform({2, 2, 3, 3}, rng), uniform({2}, rng, 0.5, 1.5), uniform({2}, rng)};
      },
      [](const Inputs& in) {
        Tensor mean = Tensor::from_values({2}, {0.1, -0.2}, f64);
        Tensor var = Tensor::from_values({2}, {0.8, 1.3}, f64);
        return ops::batch_norm2d(in[0], in[1], in[2], mean, var, ops::Mode::eval);
      });
  run(
      "relu", tol, [](auto& rng) { return Inputs{avoid(uniform({2, 3, 4, 4}, rng), 0.0, 0.05)}; },
      [](const Inputs& in) { return ops::relu(in[0]); });
  run(
      "softmax_channels", tol, [](auto& rng) { return Inputs{uniform({2, 3, 4, 4}, rng, -2, 2)}; },
      [](const Inputs& in) { return ops::softmax_channels(in[0]); });
  run(
      "avg_pool2d", tol, [](auto& rng) { return Inputs{uniform({2, 2, 4, 6}, rng)}; },
      [](const Inputs& in) { return ops::avg_pool2d(in[0]); });
  run(
      "upsample_nearest2x", tol, [](auto& rng) { return Inputs{uniform({2, 2, 3, 3}, rng)}; },
      [](const Inputs& in) { return ops::upsample_nearest2x(in[0]); });
  run(
      "concat_channels", tol,
      [](auto& rng) { return Inputs{uniform({2, 2, 3, 3}, rng), uniform({2, 3, 3, 3}, rng)}; },
      [](const Inputs& in) { return ops::concat_channels(in[0], in[1]); });
  run(
      "slice_channels", tol, [](auto& rng) { return Inputs{uniform({2, 5, 3, 3}, rng)}; },
      [](const Inputs& in) { return ops::slice_channels(in[0], 1, 3); });
  run(
      "add", tol,
      [](auto& rng) { return Inputs{uniform({2, 3, 4}, rng), uniform({2, 3, 4}, rng)}; },
      [](const Inputs& in) { return ops::add(in[0], in[1]); });
  run(
      "sub", tol,
      [](auto& rng) { return Inputs{uniform({2, 3, 4}, rng), uniform({2, 3, 4}, rng)}; },
      [](const Inputs& in) { return ops::sub(in[0], in[1]); });
  run(
      "mul", tol,
      [](auto& rng) { return Inputs{uniform({2, 3, 4}, rng), uniform({2, 3, 4}, rng)}; },
      [](const Inputs& in) { return ops::mul(in[0], in[1]); });
  run(
      "div", tol,
      [](auto& rng) { return Inputs{uniform({2, 3, 4}, rng), uniform({2, 3, 4}, rng, 0.5, 2.0)}; },
      [](const Inputs& in) { return ops::div(in[0], in[1]); });
  run(
      "add_scalar", tol, [](auto& rng) { return Inputs{uniform({3, 4}, rng)}; },
      [](const Inputs& in) { return ops::add(in[0], 0.7); });
  run(
      "mul_scalar", tol, [](auto& rng) { return Inputs{uniform({3, 4}, rng)}; },
      [](const Inputs& in) { return ops::mul(in[0], -1.3); });
  run(
      "rsub_scalar", tol, [](auto& rng) { return Inputs{uniform({3, 4}, rng)}; },
      [](const Inputs& in) { return ops::rsub(1.0, in[0]); });
  run(
      "log", tol, [](auto& rng) { return Inputs{uniform({3, 4}, rng, 0.2, 2.0)}; },
      [](const Inputs& in) { return ops::log(in[0]); });
  run(
      "pow_scalar", tol, [](auto& rng) { return Inputs{uniform({3, 4}, rng, 0.2, 2.0)}; },
      [](const Inputs& in) { return ops::pow_scalar(in[0], 2.5); });
  run(
      "clamp", tol,
      [](auto& rng) { return Inputs{avoid(avoid(uniform({4, 5}, rng), -0.5, 0.05), 0.5, 0.05)}; },
      [](const Inputs& in) { return ops::clamp(in[0], -0.5, 0.5); });
  run(
      "sum_all", tol, [](auto& rng) { return Inputs{uniform({2, 3, 4}, rng)}; },
      [](const Inputs& in) { return ops::sum_all(in[0]); });
  run(
      "channel_sum", tol, [](auto& rng) { return Inputs{uniform({2, 3, 4, 4}, rng)}; },
      [](const Inputs& in) { return ops::channel_sum(in[0]); });

  auto loss_inputs = [](auto& rng) { return Inputs{random_probs(2, 3, 4, 4, rng)}; };
  auto loss_check = [&](const std::string& name, auto loss) {
    std::mt19937_64 rng(derive_seed(seed, ++stream));
    Tensor target = random_one_hot(2, 3, 4, 4, rng);
    results.push_back(check_gradient(
        name, [&](const Inputs& in) { return loss(in[0], target, LossConfig{}); }, loss_inputs(rng),
        tol, rng, options));
  };
  loss_check("dice_loss", [](auto&&... a) { return dice_loss(a...); });
  loss_check("focal_loss", [](auto&&... a) { return focal_loss(a...); });
  loss_check("compound_loss", [](auto&&... a) { return compound_loss(a...); });

  // Tiny end-to-end model, compound loss, sampled parameter elements.
  {
    std::mt19937_64 rng(derive_seed(seed, ++stream));
    AvNetModel model = build_avnet(AvNetConfig::tiny(), derive_seed(seed, stream, 1), f64);
    const std::int64_t S = model.config().input_size;
    const std::int64_t N = options.model_batch;
    const Tensor x = uniform({N, 2, S, S}, rng, 0.0, 1.0);
    const Tensor target = random_one_hot(N, 3, S, S, rng);
    auto objective = [&]() {
      return compound_loss(model.forward(x, ops::Mode::train), target).item();
    };

    std::vector<Tensor> params;
    for (const auto& e : model.parameters().entries()) {
      if (e.trainable) params.push_back(e.tensor);
    }
    {
      Tape tape;
      TapeScope scope(tape);
      Tensor loss = compound_loss(model.forward(x, ops::Mode::train), target);
      tape.backward(loss);
    }
    std::vector<Tensor> grads;
    for (auto& p : params) {
      grads.push_back(p.has_grad() ? p.grad().clone() : Tensor::zeros(p.shape(), f64));
      p.clear_grad();
    }

    GradcheckResult r{"avnet_tiny_end_to_end", 0.0, 1e-3, 0};
    NoGradGuard no_grad;
    std::uniform_int_distribution<std::size_t> pick_param(0, params.size() - 1);
    const double h = options.model_step;
    const double base = objective();
    for (int attempt = 0; r.checked < options.model_samples && attempt < 4 * options.model_samples;
         ++attempt) {
      // Round-robin over tensors first so every tensor kind is covered.
      const std::size_t k = attempt < static_cast<int>(params.size())
                                ? static_cast<std::size_t>(attempt)
                                : pick_param(rng);
      auto v = params[k].data<double>();
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng);
      const double saved = v[i];
      v[i] = saved + h;
      const double up = objective();
      v[i] = saved - h;
      const double down = objective();
      v[i] = saved;
      // One-sided slopes that disagree mean a ReLU switched inside the step;
      // the loss is not smooth there, so central differences say nothing.
      const double fwd = (up - base) / h, bwd = (base - down) / h;
      if (gradcheck_rel_error(fwd, bwd) > options.kink_threshold) {
        ++r.skipped;
        continue;
      }
      const double numeric = (up - down) / (2 * h);
      r.max_rel_error =
          std::max(r.max_rel_error, gradcheck_rel_error(grads[k].data<double>()[i], numeric));
      ++r.checked;
    }
    r.complete = r.checked >= options.model_samples;
    results.push_back(r);
  }
  return results;
}

}  // namespace avnet
