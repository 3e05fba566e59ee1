#include <algorithm>
#include <vector>

#include "avnet/ops.hpp"

namespace avnet::ops {

namespace {

// C[M x N] += A[M x K] * B[K x N]
template <typename T>
void gemm_nn(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C) {
  for (std::int64_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    const T* a = A + i * K;
    for (std::int64_t k = 0; k < K; ++k) {
      const T aik = a[k];
      if (aik == T(0)) continue;
      const T* b = B + k * N;
      for (std::int64_t j = 0; j < N; ++j) c[j] += aik * b[j];
    }
  }
}

// C[M x N] += A[M x K] * B[N x K]^T
template <typename T>
void gemm_nt(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C) {
  for (std::int64_t i = 0; i < M; ++i) {
    const T* a = A + i * K;
    for (std::int64_t j = 0; j < N; ++j) {
      const T* b = B + j * K;
      T acc = 0;
      for (std::int64_t k = 0; k < K; ++k) acc += a[k] * b[k];
      C[i * N + j] += acc;
    }
  }
}

// C[M x N] += A[K x M]^T * B[K x N]
template <typename T>
void gemm_tn(std::int64_t M, std::int64_t N, std::int64_t K, const T* A, const T* B, T* C) {
  for (std::int64_t k = 0; k < K; ++k) {
    const T* a = A + k * M;
    const T* b = B + k * N;
    for (std::int64_t i = 0; i < M; ++i) {
      const T aki = a[i];
      if (aki == T(0)) continue;
      T* c = C + i * N;
      for (std::int64_t j = 0; j < N; ++j) c[j] += aki * b[j];
    }
  }
}

struct ConvGeometry {
  std::int64_t N, C, H, W, O, k, Ho, Wo;
  int stride, pad;

  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
  std::int64_t col_rows() const { return C * k * k; }
  std::int64_t col_cols() const { return Ho * Wo; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* img, T* cols) {
  const std::int64_t hw = g.Ho * g.Wo;
  for (std::int64_t c = 0; c < g.C; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        T* row = cols + ((c * g.k + ky) * g.k + kx) * hw;
        for (std::int64_t oy = 0; oy < g.Ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          T* out = row + oy * g.Wo;
          if (iy < 0 || iy >= g.H) {
            std::fill(out, out + g.Wo, T(0));
            continue;
          }
          const T* in = img + (c * g.H + iy) * g.W;
          for (std::int64_t ox = 0; ox < g.Wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            out[ox] = (ix >= 0 && ix < g.W) ? in[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* img) {
  const std::int64_t hw = g.Ho * g.Wo;
  for (std::int64_t c = 0; c < g.C; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const T* row = cols + ((c * g.k + ky) * g.k + kx) * hw;
        for (std::int64_t oy = 0; oy < g.Ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.H) continue;
          T* in = img + (c * g.H + iy) * g.W;
          const T* src = row + oy * g.Wo;
          for (std::int64_t ox = 0; ox < g.Wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.W) in[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward(const ConvGeometry& g, const Tensor& input, const Tensor& weight,
                  const Tensor& bias, Tensor& out) {
  const T* x = input.data<T>().data();
  const T* w = weight.data<T>().data();
  T* y = out.data<T>().data();
  const std::int64_t in_stride = g.C * g.H * g.W;
  const std::int64_t out_stride = g.O * g.Ho * g.Wo;
  std::vector<T> cols(g.pointwise() ? 0 : static_cast<std::size_t>(g.col_rows() * g.col_cols()));
  for (std::int64_t n = 0; n < g.N; ++n) {
    const T* b_mat = x + n * in_stride;
    if (!g.pointwise()) {
      im2col(g, b_mat, cols.data());
      b_mat = cols.data();
    }
    T* y_n = y + n * out_stride;
    if (bias.defined()) {
      auto b = bias.data<T>();
      for (std::int64_t o = 0; o < g.O; ++o) {
        std::fill(y_n + o * g.col_cols(), y_n + (o + 1) * g.col_cols(), b[o]);
      }
    }
    gemm_nn(g.O, g.col_cols(), g.col_rows(), w, b_mat, y_n);
  }
}

template <typename T>
std::vector<Tensor> conv_backward(const ConvGeometry& g, const Tensor& input, const Tensor& weight,
                                  const Tensor& bias, const Tensor& grad_out) {
  const T* x = input.data<T>().data();
  const T* w = weight.data<T>().data();
  const T* dy = grad_out.data<T>().data();
  const std::int64_t in_stride = g.C * g.H * g.W;
  const std::int64_t out_stride = g.O * g.Ho * g.Wo;

  Tensor dx, dw, db;
  if (input.requires_grad()) dx = Tensor::zeros(input.shape(), input.dtype());
  if (weight.requires_grad()) dw = Tensor::zeros(weight.shape(), weight.dtype());
  if (bias.defined() && bias.requires_grad()) db = Tensor::zeros(bias.shape(), bias.dtype());

  const std::size_t col_size = static_cast<std::size_t>(g.col_rows() * g.col_cols());
  std::vector<T> cols(g.pointwise() ? 0 : col_size);
  std::vector<T> dcols(g.pointwise() || !dx.defined() ? 0 : col_size);
  for (std::int64_t n = 0; n < g.N; ++n) {
    const T* dy_n = dy + n * out_stride;
    if (dw.defined()) {
      const T* b_mat = x + n * in_stride;
      if (!g.pointwise()) {
        im2col(g, b_mat, cols.data());
        b_mat = cols.data();
      }
      gemm_nt(g.O, g.col_rows(), g.col_cols(), dy_n, b_mat, dw.data<T>().data());
    }
    if (dx.defined()) {
      T* dx_n = dx.data<T>().data() + n * in_stride;
      if (g.pointwise()) {
        gemm_tn(g.col_rows(), g.col_cols(), g.O, w, dy_n, dx_n);
      } else {
        std::fill(dcols.begin(), dcols.end(), T(0));
        gemm_tn(g.col_rows(), g.col_cols(), g.O, w, dy_n, dcols.data());
        col2im(g, dcols.data(), dx_n);
      }
    }
    if (db.defined()) {
      auto b = db.data<T>();
      for (std::int64_t o = 0; o < g.O; ++o) {
        T acc = 0;
        const T* row = dy_n + o * g.col_cols();
        for (std::int64_t j = 0; j < g.col_cols(); ++j) acc += row[j];
        b[o] += acc;
      }
    }
  }
  return {dx, dw, db};
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  if (input.rank() != 4 || weight.rank() != 4) {
    throw ShapeError("conv2d expects 4-d input and weight, got " + input.shape().str() + " and " +
                     weight.shape().str());
  }
  if (stride < 1 || padding < 0) {
    throw std::invalid_argument("conv2d: stride must be positive and padding non-negative");
  }
  if (input.dtype() != weight.dtype() || (bias.defined() && bias.dtype() != input.dtype())) {
    throw ShapeError("conv2d: dtype mismatch between input, weight and bias");
  }
  ConvGeometry g{};
  g.N = input.dim(0);
  g.C = input.dim(1);
  g.H = input.dim(2);
  g.W = input.dim(3);
  g.O = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = padding;
  if (weight.dim(1) != g.C) {
    throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                     " input channels but input has " + std::to_string(g.C) + " (input " +
                     input.shape().str() + ", weight " + weight.shape().str() + ")");
  }
  if (weight.dim(3) != g.k) {
    throw ShapeError("conv2d: only square kernels are supported, got " + weight.shape().str());
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.O)) {
    throw ShapeError("conv2d: bias shape " + bias.shape().str() + " does not match " +
                     std::to_string(g.O) + " output channels");
  }
  const std::int64_t span_h = g.H + 2 * g.pad - g.k;
  const std::int64_t span_w = g.W + 2 * g.pad - g.k;
  if (span_h < 0 || span_w < 0) {
    throw ShapeError("conv2d: kernel " + std::to_string(g.k) + " larger than padded input " +
                     input.shape().str() + " with padding " + std::to_string(g.pad));
  }
  g.Ho = span_h / stride + 1;
  g.Wo = span_w / stride + 1;
  if (g.Ho <= 0 || g.Wo <= 0) throw ShapeError("conv2d: zero-size output");

  Tensor out = Tensor::zeros({g.N, g.O, g.Ho, g.Wo}, input.dtype());
  dispatch(input.dtype(), [&]<typename T>() { conv_forward<T>(g, input, weight, bias, out); });

  if (should_record({&input, &weight, &bias})) {
    record_op("conv2d", {input, weight, bias}, out, [g, input, weight, bias](const Tensor& dy) {
      return dispatch(input.dtype(),
                      [&]<typename T>() { return conv_backward<T>(g, input, weight, bias, dy); });
    });
  }
  return out;
}

}  // namespace avnet::ops
