#include "avnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace avnet::ops {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  if (a.dtype() != b.dtype()) {
    throw ShapeError(std::string(op) + ": dtype mismatch " + to_string(a.dtype()) + " vs " +
                     to_string(b.dtype()));
  }
}

void require_rank4(const char* op, const Tensor& t) {
  if (t.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected N x C x H x W, got " + t.shape().str());
  }
}

// out[i] = f(a[i]); grad = dy[i] * df(a[i], out[i]).
template <typename F, typename DF>
Tensor unary(const char* name, const Tensor& a, F f, DF df) {
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    auto y = out.data<T>();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<T>(f(static_cast<double>(x[i])));
  });
  if (should_record({&a})) {
    record_op(name, {a}, out, [a, out, df](const Tensor& dy) {
      Tensor dx = Tensor::zeros(a.shape(), a.dtype());
      dispatch(a.dtype(), [&]<typename T>() {
        auto x = a.data<T>();
        auto y = out.data<T>();
        auto g = dy.data<T>();
        auto d = dx.data<T>();
        for (std::size_t i = 0; i < x.size(); ++i) {
          d[i] = static_cast<T>(static_cast<double>(g[i]) *
                                df(static_cast<double>(x[i]), static_cast<double>(y[i])));
        }
      });
      return std::vector<Tensor>{dx};
    });
  }
  return out;
}

// Elementwise binary op with per-element partials da(x, y), db(x, y).
template <typename F, typename DA, typename DB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  require_same_shape(name, a, b);
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    auto z = b.data<T>();
    auto y = out.data<T>();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i], z[i]);
  });
  if (should_record({&a, &b})) {
    record_op(name, {a, b}, out, [a, b, da, db](const Tensor& dy) {
      Tensor ga, gb;
      if (a.requires_grad()) ga = Tensor::zeros(a.shape(), a.dtype());
      if (b.requires_grad()) gb = Tensor::zeros(b.shape(), b.dtype());
      dispatch(a.dtype(), [&]<typename T>() {
        auto x = a.data<T>();
        auto z = b.data<T>();
        auto g = dy.data<T>();
        if (ga.defined()) {
          auto d = ga.data<T>();
          for (std::size_t i = 0; i < x.size(); ++i) d[i] = g[i] * da(x[i], z[i]);
        }
        if (gb.defined()) {
          auto d = gb.data<T>();
          for (std::size_t i = 0; i < x.size(); ++i) d[i] = g[i] * db(x[i], z[i]);
        }
      });
      return std::vector<Tensor>{ga, gb};
    });
  }
  return out;
}

}  // namespace

Tensor batch_norm2d(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                    Tensor& running_mean, Tensor& running_var, Mode mode,
                    const BatchNormOptions& options) {
  require_rank4("batch_norm2d", input);
  const std::int64_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  const std::initializer_list<const Tensor*> per_channel{&gamma, &beta, &running_mean,
                                                         &running_var};
  for (const Tensor* p : per_channel) {
    if (p->rank() != 1 || p->dim(0) != C) {
      throw ShapeError("batch_norm2d: per-channel tensor of shape " + p->shape().str() +
                       " does not match " + std::to_string(C) + " input channels");
    }
    if (p->dtype() != input.dtype()) throw ShapeError("batch_norm2d: dtype mismatch");
  }
  const std::int64_t M = N * HW;
  if (mode == Mode::train && M == 0) throw ShapeError("batch_norm2d: empty batch in train mode");

  Tensor out = Tensor::zeros(input.shape(), input.dtype());
  Tensor normalized = Tensor::zeros(input.shape(), input.dtype());
  std::vector<double> inv_std(static_cast<std::size_t>(C));

  dispatch(input.dtype(), [&]<typename T>() {
    auto x = input.data<T>();
    auto xh = normalized.data<T>();
    auto y = out.data<T>();
    auto g = gamma.data<T>();
    auto b = beta.data<T>();
    auto rm = running_mean.data<T>();
    auto rv = running_var.data<T>();
    for (std::int64_t c = 0; c < C; ++c) {
      double mean, var;
      if (mode == Mode::train) {
        double sum = 0.0;
        for (std::int64_t n = 0; n < N; ++n) {
          const T* p = x.data() + (n * C + c) * HW;
          for (std::int64_t i = 0; i < HW; ++i) sum += p[i];
        }
        mean = sum / static_cast<double>(M);
        double sq = 0.0;
        for (std::int64_t n = 0; n < N; ++n) {
          const T* p = x.data() + (n * C + c) * HW;
          for (std::int64_t i = 0; i < HW; ++i) {
            const double d = p[i] - mean;
            sq += d * d;
          }
        }
        var = sq / static_cast<double>(M);
        rm[c] = static_cast<T>(options.momentum * rm[c] + (1.0 - options.momentum) * mean);
        rv[c] = static_cast<T>(options.momentum * rv[c] + (1.0 - options.momentum) * var);
      } else {
        mean = rm[c];
        var = rv[c];
      }
      const double istd = 1.0 / std::sqrt(var + options.eps);
      inv_std[static_cast<std::size_t>(c)] = istd;
      for (std::int64_t n = 0; n < N; ++n) {
        const std::int64_t off = (n * C + c) * HW;
        for (std::int64_t i = 0; i < HW; ++i) {
          const double h = (x[off + i] - mean) * istd;
          xh[off + i] = static_cast<T>(h);
          y[off + i] = static_cast<T>(g[c] * h + b[c]);
        }
      }
    }
  });

  if (should_record({&input, &gamma, &beta})) {
    record_op("batch_norm2d", {input, gamma, beta}, out,
              [input, gamma, beta, normalized, inv_std, mode, N, C, HW](const Tensor& dy) {
                Tensor dx, dg, db;
                if (input.requires_grad()) dx = Tensor::zeros(input.shape(), input.dtype());
                if (gamma.requires_grad()) dg = Tensor::zeros(gamma.shape(), gamma.dtype());
                if (beta.requires_grad()) db = Tensor::zeros(beta.shape(), beta.dtype());
                dispatch(input.dtype(), [&]<typename T>() {
                  auto xh = normalized.data<T>();
                  auto g = dy.data<T>();
                  auto gm = gamma.data<T>();
                  const double M = static_cast<double>(N * HW);
                  for (std::int64_t c = 0; c < C; ++c) {
                    double sum_dy = 0.0, sum_dy_xh = 0.0;
                    for (std::int64_t n = 0; n < N; ++n) {
                      const std::int64_t off = (n * C + c) * HW;
                      for (std::int64_t i = 0; i < HW; ++i) {
                        sum_dy += g[off + i];
                        sum_dy_xh += static_cast<double>(g[off + i]) * xh[off + i];
                      }
                    }
                    if (dg.defined()) dg.data<T>()[c] = static_cast<T>(sum_dy_xh);
                    if (db.defined()) db.data<T>()[c] = static_cast<T>(sum_dy);
                    if (!dx.defined()) continue;
                    auto d = dx.data<T>();
                    const double scale = gm[c] * inv_std[static_cast<std::size_t>(c)];
                    for (std::int64_t n = 0; n < N; ++n) {
                      const std::int64_t off = (n * C + c) * HW;
                      for (std::int64_t i = 0; i < HW; ++i) {
                        if (mode == Mode::train) {
                          d[off + i] = static_cast<T>(
                              scale * (g[off + i] - sum_dy / M - xh[off + i] * sum_dy_xh / M));
                        } else {
                          d[off + i] = static_cast<T>(scale * g[off + i]);
                        }
                      }
                    }
                  }
                });
                return std::vector<Tensor>{dx, dg, db};
              });
  }
  return out;
}

Tensor relu(const Tensor& input) {
  return unary(
      "relu", input, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor softmax_channels(const Tensor& input) {
  require_rank4("softmax_channels", input);
  const std::int64_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  if (C < 1) throw ShapeError("softmax_channels: need at least one channel");
  Tensor out = Tensor::zeros(input.shape(), input.dtype());
  dispatch(input.dtype(), [&]<typename T>() {
    auto x = input.data<T>();
    auto y = out.data<T>();
    std::vector<double> e(static_cast<std::size_t>(C));
    for (std::int64_t n = 0; n < N; ++n) {
      const std::int64_t base = n * C * HW;
      for (std::int64_t i = 0; i < HW; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::int64_t c = 0; c < C; ++c) mx = std::max<double>(mx, x[base + c * HW + i]);
        double sum = 0.0;
        for (std::int64_t c = 0; c < C; ++c) {
          e[c] = std::exp(x[base + c * HW + i] - mx);
          sum += e[c];
        }
        for (std::int64_t c = 0; c < C; ++c) y[base + c * HW + i] = static_cast<T>(e[c] / sum);
      }
    }
  });
  if (should_record({&input})) {
    record_op("softmax_channels", {input}, out, [out, N, C, HW](const Tensor& dy) {
      Tensor dx = Tensor::zeros(out.shape(), out.dtype());
      dispatch(out.dtype(), [&]<typename T>() {
        auto y = out.data<T>();
        auto g = dy.data<T>();
        auto d = dx.data<T>();
        for (std::int64_t n = 0; n < N; ++n) {
          const std::int64_t base = n * C * HW;
          for (std::int64_t i = 0; i < HW; ++i) {
            double dot = 0.0;
            for (std::int64_t c = 0; c < C; ++c) {
              dot += static_cast<double>(g[base + c * HW + i]) * y[base + c * HW + i];
            }
            for (std::int64_t c = 0; c < C; ++c) {
              const std::int64_t k = base + c * HW + i;
              d[k] = static_cast<T>(y[k] * (g[k] - dot));
            }
          }
        }
      });
      return std::vector<Tensor>{dx};
    });
  }
  return out;
}

Tensor avg_pool2d(const Tensor& input) {
  require_rank4("avg_pool2d", input);
  const std::int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("avg_pool2d: spatial dims must be even, got " + input.shape().str());
  }
  const std::int64_t Ho = H / 2, Wo = W / 2, planes = N * C;
  Tensor out = Tensor::zeros({N, C, Ho, Wo}, input.dtype());
  dispatch(input.dtype(), [&]<typename T>() {
    auto x = input.data<T>();
    auto y = out.data<T>();
    for (std::int64_t p = 0; p < planes; ++p) {
      const T* src = x.data() + p * H * W;
      T* dst = y.data() + p * Ho * Wo;
      for (std::int64_t oy = 0; oy < Ho; ++oy) {
        const T* r0 = src + (2 * oy) * W;
        const T* r1 = r0 + W;
        for (std::int64_t ox = 0; ox < Wo; ++ox) {
          dst[oy * Wo + ox] = (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) * T(0.25);
        }
      }
    }
  });
  if (should_record({&input})) {
    record_op("avg_pool2d", {input}, out, [shape = input.shape(), planes, H, W](const Tensor& dy) {
      Tensor dx = Tensor::zeros(shape, dy.dtype());
      dispatch(dy.dtype(), [&]<typename T>() {
        auto g = dy.data<T>();
        auto d = dx.data<T>();
        const std::int64_t Ho = H / 2, Wo = W / 2;
        for (std::int64_t p = 0; p < planes; ++p) {
          for (std::int64_t y = 0; y < H; ++y) {
            for (std::int64_t x = 0; x < W; ++x) {
              d[(p * H + y) * W + x] = g[(p * Ho + y / 2) * Wo + x / 2] * T(0.25);
            }
          }
        }
      });
      return std::vector<Tensor>{dx};
    });
  }
  return out;
}

Tensor upsample_nearest2x(const Tensor& input) {
  require_rank4("upsample_nearest2x", input);
  const std::int64_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::int64_t planes = N * C, Ho = 2 * H, Wo = 2 * W;
  Tensor out = Tensor::zeros({N, C, Ho, Wo}, input.dtype());
  dispatch(input.dtype(), [&]<typename T>() {
    auto x = input.data<T>();
    auto y = out.data<T>();
    for (std::int64_t p = 0; p < planes; ++p) {
      for (std::int64_t oy = 0; oy < Ho; ++oy) {
        const T* src = x.data() + (p * H + oy / 2) * W;
        T* dst = y.data() + (p * Ho + oy) * Wo;
        for (std::int64_t ox = 0; ox < Wo; ++ox) dst[ox] = src[ox / 2];
      }
    }
  });
  if (should_record({&input})) {
    record_op("upsample_nearest2x", {input}, out,
              [shape = input.shape(), planes, H, W](const Tensor& dy) {
                Tensor dx = Tensor::zeros(shape, dy.dtype());
                dispatch(dy.dtype(), [&]<typename T>() {
                  auto g = dy.data<T>();
                  auto d = dx.data<T>();
                  const std::int64_t Ho = 2 * H, Wo = 2 * W;
                  for (std::int64_t p = 0; p < planes; ++p) {
                    for (std::int64_t oy = 0; oy < Ho; ++oy) {
                      for (std::int64_t ox = 0; ox < Wo; ++ox) {
                        d[(p * H + oy / 2) * W + ox / 2] += g[(p * Ho + oy) * Wo + ox];
                      }
                    }
                  }
                });
                return std::vector<Tensor>{dx};
              });
  }
  return out;
}

namespace {

// Copies channel range [src_c0, src_c0 + count) of src into dst starting at
// channel dst_c0. Both tensors are N x C x H x W with equal N, H, W.
template <typename T>
void copy_channels(const Tensor& src, std::int64_t src_c0, Tensor& dst, std::int64_t dst_c0,
                   std::int64_t count, bool accumulate) {
  const std::int64_t N = src.dim(0), HW = src.dim(2) * src.dim(3);
  const std::int64_t Cs = src.dim(1), Cd = dst.dim(1);
  auto s = src.data<T>();
  auto d = dst.data<T>();
  for (std::int64_t n = 0; n < N; ++n) {
    const T* from = s.data() + (n * Cs + src_c0) * HW;
    T* to = d.data() + (n * Cd + dst_c0) * HW;
    if (accumulate) {
      for (std::int64_t i = 0; i < count * HW; ++i) to[i] += from[i];
    } else {
      std::copy(from, from + count * HW, to);
    }
  }
}

}  // namespace

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank4("concat_channels", a);
  require_rank4("concat_channels", b);
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: batch/spatial mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
  if (a.dtype() != b.dtype()) throw ShapeError("concat_channels: dtype mismatch");
  const std::int64_t Ca = a.dim(1), Cb = b.dim(1);
  Tensor out = Tensor::zeros({a.dim(0), Ca + Cb, a.dim(2), a.dim(3)}, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    copy_channels<T>(a, 0, out, 0, Ca, false);
    copy_channels<T>(b, 0, out, Ca, Cb, false);
  });
  if (should_record({&a, &b})) {
    record_op("concat_channels", {a, b}, out,
              [sa = a.shape(), sb = b.shape(), Ca, Cb](const Tensor& dy) {
                Tensor ga = Tensor::zeros(sa, dy.dtype());
                Tensor gb = Tensor::zeros(sb, dy.dtype());
                dispatch(dy.dtype(), [&]<typename T>() {
                  copy_channels<T>(dy, 0, ga, 0, Ca, false);
                  copy_channels<T>(dy, Ca, gb, 0, Cb, false);
                });
                return std::vector<Tensor>{ga, gb};
              });
  }
  return out;
}

Tensor slice_channels(const Tensor& input, std::int64_t begin, std::int64_t count) {
  require_rank4("slice_channels", input);
  if (begin < 0 || count < 0 || begin + count > input.dim(1)) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + input.shape().str());
  }
  Tensor out = Tensor::zeros({input.dim(0), count, input.dim(2), input.dim(3)}, input.dtype());
  dispatch(input.dtype(),
           [&]<typename T>() { copy_channels<T>(input, begin, out, 0, count, false); });
  if (should_record({&input})) {
    record_op("slice_channels", {input}, out,
              [shape = input.shape(), begin, count](const Tensor& dy) {
                Tensor dx = Tensor::zeros(shape, dy.dtype());
                dispatch(dy.dtype(),
                         [&]<typename T>() { copy_channels<T>(dy, 0, dx, begin, count, true); });
                return std::vector<Tensor>{dx};
              });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](auto x, auto y) { return x + y; }, [](auto, auto) { return 1; },
      [](auto, auto) { return 1; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](auto x, auto y) { return x - y; }, [](auto, auto) { return 1; },
      [](auto, auto) { return -1; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](auto x, auto y) { return x * y; }, [](auto, auto y) { return y; },
      [](auto x, auto) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](auto x, auto y) { return x / y; },
      [](auto, auto y) { return decltype(y)(1) / y; }, [](auto x, auto y) { return -x / (y * y); });
}

Tensor add(const Tensor& a, double b) {
  return unary(
      "add_scalar", a, [b](double x) { return x + b; }, [](double, double) { return 1.0; });
}

Tensor mul(const Tensor& a, double b) {
  return unary("mul_scalar", a, [b](double x) { return x * b; }, [b](double, double) { return b; });
}

Tensor rsub(double b, const Tensor& a) {
  return unary(
      "rsub_scalar", a, [b](double x) { return b - x; }, [](double, double) { return -1.0; });
}

Tensor log(const Tensor& a) {
  const bool bad = dispatch(a.dtype(), [&]<typename T>() {
    auto x = a.data<T>();
    return std::any_of(x.begin(), x.end(), [](T v) { return !(v > T(0)); });
  });
  if (bad) throw DomainError("log: input contains non-positive values; clamp before taking log");
  return unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor pow_scalar(const Tensor& a, double exponent) {
  return unary(
      "pow_scalar", a, [exponent](double x) { return std::pow(x, exponent); },
      [exponent](double x, double) {
        if (exponent == 0.0) return 0.0;
        return exponent * std::pow(x, exponent - 1.0);
      });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sum_all(const Tensor& a) {
  const double total = dispatch(a.dtype(), [&]<typename T>() {
    double s = 0.0;
    for (T v : a.data<T>()) s += v;
    return s;
  });
  Tensor out = Tensor::scalar(total, a.dtype());
  if (should_record({&a})) {
    record_op("sum_all", {a}, out, [shape = a.shape()](const Tensor& dy) {
      return std::vector<Tensor>{Tensor::full(shape, dy.item(), dy.dtype())};
    });
  }
  return out;
}

Tensor channel_sum(const Tensor& input) {
  require_rank4("channel_sum", input);
  const std::int64_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  std::vector<double> sums(static_cast<std::size_t>(C), 0.0);
  dispatch(input.dtype(), [&]<typename T>() {
    auto x = input.data<T>();
    for (std::int64_t n = 0; n < N; ++n) {
      for (std::int64_t c = 0; c < C; ++c) {
        const T* p = x.data() + (n * C + c) * HW;
        double s = 0.0;
        for (std::int64_t i = 0; i < HW; ++i) s += p[i];
        sums[static_cast<std::size_t>(c)] += s;
      }
    }
  });
  Tensor out = Tensor::from_values({C}, sums, input.dtype());
  if (should_record({&input})) {
    record_op("channel_sum", {input}, out, [shape = input.shape(), N, C, HW](const Tensor& dy) {
      Tensor dx = Tensor::zeros(shape, dy.dtype());
      dispatch(dy.dtype(), [&]<typename T>() {
        auto g = dy.data<T>();
        auto d = dx.data<T>();
        for (std::int64_t n = 0; n < N; ++n) {
          for (std::int64_t c = 0; c < C; ++c) {
            std::fill_n(d.data() + (n * C + c) * HW, HW, g[c]);
          }
        }
      });
      return std::vector<Tensor>{dx};
    });
  }
  return out;
}

}  // namespace avnet::ops
