#include <doctest.h>

#include <cmath>
#include <numeric>

#include "avnet/ops.hpp"
#include "oracles.hpp"

using namespace avnet;
using ops::Mode;

namespace {

std::vector<double> values(const Tensor& t) { return t.to_vector(); }

void check_close(const std::vector<double>& got, const std::vector<double>& want, double tol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(tol));
}

}  // namespace

TEST_CASE("shape and construction") {
  CHECK(Shape{2, 3, 4}.numel() == 24);
  CHECK(Shape{2, 0, 4}.numel() == 0);
  CHECK(Shape{2, 3}.str() == "[2x3]");
  CHECK_THROWS_AS(Shape({2, -1}), ShapeError);
  CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1, 2, 3}), ShapeError);

  Tensor t = Tensor::from_values({2, 2}, {1, 2, 3, 4}, DType::float64);
  CHECK(t.numel() == 4);
  CHECK(t.dtype() == DType::float64);
  CHECK(t.data<double>().size() == 4);
  CHECK(t.at(3) == 4.0);
  CHECK_THROWS(t.data<float>());

  Tensor c = t.clone();
  c.set(0, 9.0);
  CHECK(t.at(0) == 1.0);
  CHECK(Tensor::scalar(2.5).rank() == 0);
  CHECK(t.to(DType::float32).to(DType::float64).bit_equal(t));
}

TEST_CASE("conv2d examples") {
  SUBCASE("1x1 conv is a scalar multiply") {
    Tensor x = Tensor::from_values({1, 1, 1, 1}, {2});
    Tensor w = Tensor::from_values({1, 1, 1, 1}, {3});
    CHECK(ops::conv2d(x, w, Tensor()).item() == 6.0);
  }
  SUBCASE("identity kernel with padding 1") {
    std::mt19937_64 rng(1);
    Tensor x = oracle::random_tensor({2, 1, 5, 4}, rng, -1, 1);
    Tensor w = Tensor::zeros({1, 1, 3, 3}, DType::float64);
    w.set(4, 1.0);
    CHECK(ops::conv2d(x, w, Tensor(), 1, 1).bit_equal(x));
  }
  SUBCASE("hand cross-correlation") {
    Tensor x = Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor w = Tensor::from_values({1, 1, 2, 2}, {1, 0, 0, 1});
    Tensor y = ops::conv2d(x, w, Tensor());
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.item() == 5.0);
  }
  SUBCASE("matches a direct loop for strides, padding and bias") {
    std::mt19937_64 rng(7);
    for (int stride : {1, 2}) {
      for (int pad : {0, 1, 3}) {
        Tensor x = oracle::random_tensor({2, 3, 9, 8}, rng, -2, 2);
        Tensor w = oracle::random_tensor({4, 3, 3, 3}, rng, -1, 1);
        Tensor b = oracle::random_tensor({4}, rng, -1, 1);
        const auto want = oracle::conv2d(x, w, values(b), stride, pad);
        Tensor y = ops::conv2d(x, w, b, stride, pad);
        CHECK(y.dim(2) == (9 + 2 * pad - 3) / stride + 1);
        check_close(values(y), want, 1e-12);
      }
    }
  }
  SUBCASE("errors") {
    Tensor x = Tensor::zeros({1, 2, 4, 4});
    CHECK_THROWS_AS(ops::conv2d(x, Tensor::zeros({1, 3, 3, 3}), Tensor()), ShapeError);
    CHECK_THROWS_AS(ops::conv2d(x, Tensor::zeros({1, 2, 5, 5}), Tensor()), ShapeError);
    CHECK_THROWS_AS(ops::conv2d(x, Tensor::zeros({2, 2, 3, 3}), Tensor::zeros({3})), ShapeError);
  }
}

TEST_CASE("conv2d linearity") {
  std::mt19937_64 rng(3);
  Tensor w = oracle::random_tensor({3, 2, 3, 3}, rng, -1, 1);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = oracle::random_tensor({1, 2, 6, 6}, rng, -2, 2);
    Tensor y = oracle::random_tensor({1, 2, 6, 6}, rng, -2, 2);
    const double a = 1.7, b = -0.6;
    Tensor lhs = ops::conv2d(ops::add(ops::mul(x, a), ops::mul(y, b)), w, Tensor(), 1, 1);
    Tensor rhs = ops::add(ops::mul(ops::conv2d(x, w, Tensor(), 1, 1), a),
                          ops::mul(ops::conv2d(y, w, Tensor(), 1, 1), b));
    const auto l = values(lhs), r = values(rhs);
    for (std::size_t i = 0; i < l.size(); ++i) {
      CHECK(std::abs(l[i] - r[i]) <= 1e-5 * std::max(1.0, std::abs(r[i])));
    }
  }
}

TEST_CASE("batch_norm2d examples") {
  Tensor one = Tensor::full({1}, 1.0), zero = Tensor::zeros({1});
  SUBCASE("constant input normalizes to ~0") {
    Tensor x = Tensor::full({2, 1, 3, 3}, 4.0);
    Tensor rm = Tensor::zeros({1}), rv = Tensor::full({1}, 1.0);
    for (double v : values(ops::batch_norm2d(x, one, zero, rm, rv, Mode::train))) {
      CHECK(std::abs(v) <= std::sqrt(1e-5));
    }
  }
  SUBCASE("values {1,3} map to about -1 and +1") {
    Tensor x = Tensor::from_values({2, 1, 1, 1}, {1, 3}, DType::float64);
    Tensor g = Tensor::full({1}, 1.0, DType::float64), b = Tensor::zeros({1}, DType::float64);
    Tensor rm = Tensor::zeros({1}, DType::float64), rv = Tensor::full({1}, 1.0, DType::float64);
    const auto y = values(ops::batch_norm2d(x, g, b, rm, rv, Mode::train));
    const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y[0] == doctest::Approx(-expect).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(expect).epsilon(1e-12));
    // momentum 0.9 on the old value, population variance of the batch
    CHECK(rm.at(0) == doctest::Approx(0.1 * 2.0).epsilon(1e-12));
    CHECK(rv.at(0) == doctest::Approx(0.9 + 0.1 * 1.0).epsilon(1e-12));
  }
  SUBCASE("gamma 0 gives beta everywhere") {
    std::mt19937_64 rng(5);
    Tensor x = oracle::random_tensor({2, 2, 3, 3}, rng, -3, 3, DType::float32);
    Tensor g = Tensor::zeros({2}), b = Tensor::full({2}, 5.0);
    Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
    for (Mode m : {Mode::train, Mode::eval}) {
      for (double v : values(ops::batch_norm2d(x, g, b, rm, rv, m))) CHECK(v == 5.0);
    }
  }
  SUBCASE("eval mode uses running stats and leaves them alone") {
    Tensor x = Tensor::from_values({1, 1, 1, 2}, {2, 4}, DType::float64);
    Tensor g = Tensor::full({1}, 2.0, DType::float64), b = Tensor::full({1}, 1.0, DType::float64);
    Tensor rm = Tensor::full({1}, 1.0, DType::float64), rv = Tensor::full({1}, 4.0, DType::float64);
    const auto y = values(ops::batch_norm2d(x, g, b, rm, rv, Mode::eval));
    CHECK(y[0] == doctest::Approx(2.0 * (2 - 1) / std::sqrt(4 + 1e-5) + 1).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(2.0 * (4 - 1) / std::sqrt(4 + 1e-5) + 1).epsilon(1e-12));
    CHECK(rm.at(0) == 1.0);
    CHECK(rv.at(0) == 4.0);
  }
  SUBCASE("channel mismatch") {
    Tensor x = Tensor::zeros({1, 2, 2, 2});
    Tensor rm = Tensor::zeros({2}), rv = Tensor::full({2}, 1.0);
    CHECK_THROWS_AS(ops::batch_norm2d(x, one, Tensor::zeros({2}), rm, rv, Mode::train), ShapeError);
  }
}

TEST_CASE("relu") {
  CHECK(values(ops::relu(Tensor::from_values({3}, {-1, 0, 2}))) == std::vector<double>{0, 0, 2});
  CHECK(values(ops::relu(Tensor::from_values({2}, {-3, -0.5}))) == std::vector<double>{0, 0});
  Tensor pos = Tensor::from_values({3}, {0.1, 2, 7});
  CHECK(ops::relu(pos).bit_equal(pos));
}

TEST_CASE("softmax_channels") {
  Tensor y = ops::softmax_channels(Tensor::zeros({1, 3, 1, 1}, DType::float64));
  for (double v : values(y)) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

  Tensor z = ops::softmax_channels(Tensor::from_values(
      {1, 3, 1, 1}, {std::log(1.0), std::log(2.0), std::log(3.0)}, DType::float64));
  check_close(values(z), {1.0 / 6, 2.0 / 6, 3.0 / 6}, 1e-14);

  std::mt19937_64 rng(11);
  Tensor x = oracle::random_tensor({2, 3, 4, 4}, rng, -30, 30);
  const auto base = values(ops::softmax_channels(x));
  check_close(values(ops::softmax_channels(ops::add(x, 12.5))), base, 1e-12);
  const std::int64_t hw = 16;
  for (std::int64_t n = 0; n < 2; ++n) {
    for (std::int64_t i = 0; i < hw; ++i) {
      double s = 0;
      for (std::int64_t c = 0; c < 3; ++c) {
        const double v = base[(n * 3 + c) * hw + i];
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-6);
    }
  }
  // large logits stay finite
  Tensor big = Tensor::from_values({1, 2, 1, 1}, {1000, -1000});
  for (double v : values(ops::softmax_channels(big))) CHECK(std::isfinite(v));
}

TEST_CASE("avg_pool2d and upsample") {
  CHECK(ops::avg_pool2d(Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4})).item() == 2.5);
  for (double v : values(ops::avg_pool2d(Tensor::full({1, 2, 4, 6}, 3.25)))) CHECK(v == 3.25);

  std::vector<double> ramp(16);
  std::iota(ramp.begin(), ramp.end(), 0.0);
  CHECK(values(ops::avg_pool2d(Tensor::from_values({1, 1, 4, 4}, ramp))) ==
        std::vector<double>{2.5, 4.5, 10.5, 12.5});
  CHECK_THROWS_AS(ops::avg_pool2d(Tensor::zeros({1, 1, 3, 4})), ShapeError);

  CHECK(values(ops::upsample_nearest2x(Tensor::from_values({1, 1, 1, 1}, {1}))) ==
        std::vector<double>(4, 1.0));
  CHECK(values(ops::upsample_nearest2x(Tensor::from_values({1, 1, 2, 2}, {1, 2, 3, 4}))) ==
        std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});

  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = oracle::random_tensor({2, 3, 4, 6}, rng, -2, 2);
    CHECK(ops::avg_pool2d(ops::upsample_nearest2x(x)).bit_equal(x));
    const auto in = values(x), out = values(ops::avg_pool2d(x));
    const double mi = std::accumulate(in.begin(), in.end(), 0.0) / in.size();
    const double mo = std::accumulate(out.begin(), out.end(), 0.0) / out.size();
    CHECK(std::abs(mi - mo) <= 1e-6);
  }
}

TEST_CASE("concat and slice") {
  Tensor a = Tensor::zeros({1, 3, 8, 8}), b = Tensor::full({1, 5, 8, 8}, 1.0);
  CHECK(ops::concat_channels(a, b).shape() == Shape{1, 8, 8, 8});

  std::mt19937_64 rng(9);
  Tensor x = oracle::random_tensor({2, 3, 4, 4}, rng, -1, 1, DType::float32);
  CHECK(ops::concat_channels(x, Tensor::zeros({2, 0, 4, 4})).bit_equal(x));

  Tensor y = oracle::random_tensor({2, 4, 4, 4}, rng, -1, 1, DType::float32);
  Tensor c = ops::concat_channels(x, y);
  CHECK(ops::slice_channels(c, 0, 3).bit_equal(x));
  CHECK(ops::slice_channels(c, 3, 4).bit_equal(y));
  CHECK(ops::slice_channels(c, 0, 1).bit_equal(ops::slice_channels(x, 0, 1)));
  CHECK(ops::slice_channels(c, 3, 1).bit_equal(ops::slice_channels(y, 0, 1)));
  CHECK_THROWS_AS(ops::concat_channels(x, Tensor::zeros({2, 1, 4, 5})), ShapeError);
  CHECK_THROWS_AS(ops::concat_channels(x, Tensor::zeros({1, 1, 4, 4})), ShapeError);
}

TEST_CASE("elementwise and reductions") {
  CHECK(ops::log(Tensor::from_values({1}, {1})).item() == 0.0);
  CHECK(ops::pow_scalar(Tensor::from_values({1}, {2}), 2).item() == 4.0);
  Tensor s = ops::sum_all(Tensor::from_values({2, 2}, {1, 2, 3, 4}));
  CHECK(s.rank() == 0);
  CHECK(s.item() == 10.0);
  CHECK_THROWS_AS(ops::log(Tensor::from_values({2}, {1, 0})), DomainError);
  CHECK_THROWS_AS(ops::add(Tensor::zeros({2}), Tensor::zeros({3})), ShapeError);
  CHECK(values(ops::clamp(Tensor::from_values({3}, {-2, 0.5, 9}), 0, 1)) ==
        std::vector<double>{0, 0.5, 1});
  CHECK(values(ops::div(Tensor::from_values({2}, {1, 6}), Tensor::from_values({2}, {4, 3}))) ==
        std::vector<double>{0.25, 2});
  CHECK(values(ops::rsub(1.0, Tensor::from_values({2}, {0.25, 3}))) ==
        std::vector<double>{0.75, -2});
  Tensor x = Tensor::from_values({1, 2, 1, 2}, {1, 2, 3, 4});
  CHECK(values(ops::channel_sum(x)) == std::vector<double>{3, 7});
}

TEST_CASE("determinism of forward ops") {
  std::mt19937_64 rng(21);
  Tensor x = oracle::random_tensor({2, 3, 8, 8}, rng, -1, 1, DType::float32);
  Tensor w = oracle::random_tensor({4, 3, 3, 3}, rng, -1, 1, DType::float32);
  CHECK(ops::conv2d(x, w, Tensor(), 1, 1).bit_equal(ops::conv2d(x, w, Tensor(), 1, 1)));
  CHECK(ops::softmax_channels(x).bit_equal(ops::softmax_channels(x)));
}
