#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>

#include "avnet/data.hpp"
#include "avnet/errors.hpp"
#include "avnet/image_io.hpp"
#include "oracles.hpp"

using namespace avnet;

namespace {

// Flat offset of (c, y, x) in a C x H x W tensor.
std::int64_t chw(const Tensor& t, std::int64_t c, std::int64_t y, std::int64_t x) {
  return (c * t.dim(1) + y) * t.dim(2) + x;
}

RgbImage rgb(int w, int h, std::vector<std::uint8_t> px) { return {w, h, std::move(px)}; }

int class_at(const Tensor& label, std::int64_t y, std::int64_t x) {
  for (int c = 0; c < 3; ++c) {
    if (label.at(chw(label, c, y, x)) == 1.0) return c;
  }
  return -1;
}

void check_valid(const Sample& s) {
  const auto S = s.size();
  for (double v : s.input.to_vector()) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  const auto lab = s.label.to_vector();
  for (std::int64_t i = 0; i < S * S; ++i) {
    double sum = 0;
    for (int c = 0; c < 3; ++c) {
      const double v = lab[c * S * S + i];
      REQUIRE((v == 0.0 || v == 1.0));
      sum += v;
    }
    REQUIRE(sum == 1.0);
  }
}

SynthSpec small_spec(int count = 4, int size = 64) {
  SynthSpec s;
  s.count = count;
  s.size = size;
  return s;
}

}  // namespace

TEST_CASE("label decode examples") {
  Tensor t = decode_label_rgb(rgb(3, 1, {255, 0, 0, 0, 255, 0, 10, 200, 30}));
  CHECK(t.shape() == Shape{3, 1, 3});
  CHECK(class_at(t, 0, 0) == 0);
  CHECK(class_at(t, 0, 1) == 1);
  CHECK(class_at(t, 0, 2) == 1);
  // ties go to the lower index
  Tensor tie = decode_label_rgb(rgb(2, 1, {9, 9, 9, 0, 7, 7}));
  CHECK(class_at(tie, 0, 0) == 0);
  CHECK(class_at(tie, 0, 1) == 1);
}

TEST_CASE("label encode examples") {
  Tensor probs = Tensor::from_values({3, 1, 2}, {0.4, 0.1, 0.4, 0.2, 0.2, 0.7});
  RgbImage img = encode_label_rgb(probs);
  CHECK(img.pixels == std::vector<std::uint8_t>{255, 0, 0, 0, 0, 255});
}

TEST_CASE("pure-color images survive a decode/encode round trip") {
  std::mt19937_64 rng(3);
  const std::uint8_t colors[3][3] = {{255, 0, 0}, {0, 255, 0}, {0, 0, 255}};
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 1 + static_cast<int>(rng() % 17), h = 1 + static_cast<int>(rng() % 17);
    RgbImage img{w, h, {}};
    for (int i = 0; i < w * h; ++i) {
      const auto& c = colors[rng() % 3];
      img.pixels.insert(img.pixels.end(), c, c + 3);
    }
    CHECK(encode_label_rgb(decode_label_rgb(img)) == img);
  }
}

TEST_CASE("input assembly") {
  GrayImage oct{2, 1, {255, 0}}, octa{2, 1, {0, 51}};
  Tensor x = assemble_input(oct, octa);
  CHECK(x.shape() == Shape{2, 1, 2});
  CHECK(x.at(chw(x, 0, 0, 0)) == 1.0);
  CHECK(x.at(chw(x, 0, 0, 1)) == 0.0);
  CHECK(x.at(chw(x, 1, 0, 0)) == 0.0);
  CHECK(x.at(chw(x, 1, 0, 1)) == doctest::Approx(0.2));
  CHECK_THROWS_AS(assemble_input(oct, GrayImage{1, 2, {0, 0}}), ShapeError);
}

TEST_CASE("sample validation") {
  Sample s = synth_sample(small_spec(), 1, 0);
  CHECK_NOTHROW(validate_sample(s));
  Sample bad = s;
  bad.input = s.input.clone();
  bad.input.set(chw(bad.input, 0, 0, 0), 1.5);
  CHECK_THROWS_AS(validate_sample(bad), std::invalid_argument);
  bad = s;
  bad.label = s.label.clone();
  bad.label.set(chw(bad.label, 0, 0, 0), 1.0);
  bad.label.set(chw(bad.label, 1, 0, 0), 1.0);
  CHECK_THROWS_AS(validate_sample(bad), std::invalid_argument);
}

TEST_CASE("identity augmentation and flip involution") {
  Sample s = synth_sample(small_spec(), 2, 0);
  std::mt19937_64 rng(1);
  Sample same = augment(s, AugmentSpec::none(), rng);
  CHECK(same.input.bit_equal(s.input));
  CHECK(same.label.bit_equal(s.label));

  AugmentTransform flip;
  flip.flip_h = true;
  Sample once = apply_transform(s, flip);
  CHECK_FALSE(once.input.bit_equal(s.input));
  CHECK(once.input.at(chw(once.input, 0, 5, 0)) == s.input.at(chw(s.input, 0, 5, s.size() - 1)));
  Sample twice = apply_transform(once, flip);
  CHECK(twice.input.bit_equal(s.input));
  CHECK(twice.label.bit_equal(s.label));

  AugmentTransform vflip;
  vflip.flip_v = true;
  CHECK(apply_transform(apply_transform(s, vflip), vflip).label.bit_equal(s.label));
}

TEST_CASE("augmentation keeps labels one-hot and inputs in range") {
  Sample s = synth_sample(small_spec(1, 32), 3, 0);
  AugmentSpec wide;
  wide.rotation_max_deg = 180;
  wide.zoom_lo = 0.5;
  wide.zoom_hi = 2.0;
  wide.shift_max_frac = 0.5;
  std::mt19937_64 rng(4);
  for (int draw = 0; draw < 1000; ++draw) {
    check_valid(augment(s, draw % 2 ? wide : AugmentSpec{}, rng));
  }
}

TEST_CASE("shift moves content and fills with background") {
  Sample s = synth_sample(small_spec(1, 32), 5, 0);
  AugmentTransform t;
  t.shift_x = 3;
  Sample out = apply_transform(s, t);
  for (std::int64_t y = 0; y < 32; ++y) {
    for (std::int64_t x = 0; x < 3; ++x) {
      CHECK(class_at(out.label, y, x) == 1);
      CHECK(out.input.at(chw(out.input, 0, y, x)) == 0.0);
    }
    CHECK(class_at(out.label, y, 10) == class_at(s.label, y, 7));
    CHECK(out.input.at(chw(out.input, 1, y, 10)) ==
          doctest::Approx(s.input.at(chw(s.input, 1, y, 7))).epsilon(1e-6));
  }
}

TEST_CASE("AugmentSpec validation") {
  AugmentSpec a;
  CHECK_NOTHROW(a.validate());
  a.zoom_lo = 1.2;
  CHECK_THROWS_AS(a.validate(), ConfigError);
  a = {};
  a.flip_h_prob = 1.5;
  CHECK_THROWS_AS(a.validate(), ConfigError);
  a = {};
  a.zoom_hi = 0.95;
  CHECK_THROWS_AS(a.validate(), ConfigError);
}

TEST_CASE("k-fold examples") {
  FoldPlan p = kfold_split(40, 5, 7);
  for (int f = 0; f < 5; ++f) {
    CHECK(p.test_indices(f).size() == 8);
    CHECK(p.train_indices(f).size() == 32);
  }
  FoldPlan q = kfold_split(10, 5, 7);
  for (int f = 0; f < 5; ++f) CHECK(q.test_indices(f).size() == 2);
  CHECK(kfold_split(40, 5, 7).assignments == p.assignments);
  CHECK(kfold_split(40, 5, 8).assignments != p.assignments);
  CHECK_THROWS(kfold_split(3, 5, 1));
  CHECK_THROWS(kfold_split(10, 1, 1));
}

TEST_CASE("folds are disjoint, covering and balanced") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 9);
    const std::size_t n = k + rng() % 60;
    FoldPlan p = kfold_split(n, k, rng());
    std::vector<int> seen(n, 0);
    std::size_t lo = n, hi = 0;
    for (int f = 0; f < k; ++f) {
      const auto test = p.test_indices(f), train = p.train_indices(f);
      CHECK(test.size() + train.size() == n);
      std::set<std::size_t> ts(test.begin(), test.end());
      for (auto i : train) CHECK(ts.count(i) == 0);
      for (auto i : test) ++seen[i];
      lo = std::min(lo, test.size());
      hi = std::max(hi, test.size());
    }
    CHECK(hi - lo <= 1);
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }
}

TEST_CASE("synthetic data is deterministic and valid") {
  const SynthSpec spec = small_spec(6, 64);
  auto a = synth_generate(spec, 11), b = synth_generate(spec, 11), c = synth_generate(spec, 12);
  REQUIRE(a.size() == 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].input.bit_equal(b[i].input));
    CHECK(a[i].label.bit_equal(b[i].label));
    CHECK(a[i].id == b[i].id);
    differs = differs || !a[i].input.bit_equal(c[i].input);
    check_valid(a[i]);
    std::array<int, 3> counts{};
    for (int cls : argmax_classes(a[i].label)) ++counts[cls];
    CHECK(counts[0] > 0);
    CHECK(counts[1] > 0);
    CHECK(counts[2] > 0);
  }
  CHECK(differs);
  // sample i only depends on (seed, i)
  CHECK(synth_sample(spec, 11, 3).input.bit_equal(a[3].input));
}

TEST_CASE("artery and vein OCT intensities separate") {
  const SynthSpec spec = small_spec(8, 64);
  double sum[3] = {}, n[3] = {};
  for (const auto& s : synth_generate(spec, 21)) {
    const auto cls = argmax_classes(s.label);
    const auto x = s.input.to_vector();
    for (std::size_t i = 0; i < cls.size(); ++i) {
      sum[cls[i]] += x[i];
      n[cls[i]] += 1;
    }
  }
  const double artery = sum[0] / n[0], vein = sum[2] / n[2];
  const double tol = 2 * spec.noise_sigma;
  CHECK(artery >= spec.artery_oct_lo - tol);
  CHECK(artery <= spec.artery_oct_hi + tol);
  CHECK(vein >= spec.vein_oct_lo - tol);
  CHECK(vein <= spec.vein_oct_hi + tol);
  CHECK(artery - vein > 4 * spec.noise_sigma);
}

TEST_CASE("SynthSpec validation") {
  SynthSpec s;
  CHECK_NOTHROW(s.validate());
  s.size = 65;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.vein_oct_hi = 0.7;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.vessels_min = 7;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("seed derivation") {
  CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
  std::set<std::uint64_t> seeds;
  for (std::uint64_t a = 0; a < 20; ++a) {
    for (std::uint64_t b = 0; b < 20; ++b) seeds.insert(derive_seed(42, a, b));
  }
  CHECK(seeds.size() == 400);
}

TEST_CASE("dataset directory round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "avnet_test_dataset";
  std::filesystem::remove_all(dir);
  auto samples = synth_generate(small_spec(3, 32), 5);
  for (const auto& s : samples) save_sample(dir, s);
  auto loaded = load_dataset(dir);
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(loaded[i].id == samples[i].id);
    CHECK(loaded[i].label.bit_equal(samples[i].label));
    // 8-bit quantisation bounds the input error
    const auto a = loaded[i].input.to_vector(), b = samples[i].input.to_vector();
    for (std::size_t j = 0; j < a.size(); ++j) REQUIRE(std::abs(a[j] - b[j]) <= 0.5 / 255 + 1e-6);
  }
  std::filesystem::remove(dir / (samples[1].id + "_av.png"));
  CHECK_THROWS_AS(load_dataset(dir), IoError);
  CHECK_THROWS_AS(read_gray_png(dir / "missing.png"), IoError);
  std::filesystem::remove_all(dir);
}
