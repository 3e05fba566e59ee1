#include "avnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace avnet {

namespace {

constexpr int kBackground = static_cast<int>(AvClass::background);

void require_image(const char* what, int width, int height, std::size_t bytes, int channels) {
  if (width <= 0 || height <= 0 ||
      bytes != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * channels) {
    throw ShapeError(std::string(what) + ": pixel buffer does not match " + std::to_string(width) +
                     "x" + std::to_string(height));
  }
}

}  // namespace

void validate_sample(const Sample& s) {
  if (s.input.rank() != 3 || s.input.dim(0) != 2 || s.input.dim(1) != s.input.dim(2)) {
    throw ShapeError("sample '" + s.id + "': input must be 2 x S x S, got " +
                     s.input.shape().str());
  }
  const std::int64_t S = s.input.dim(1);
  if (s.label.shape() != Shape{kNumClasses, S, S}) {
    throw ShapeError("sample '" + s.id + "': label must be 3 x S x S, got " +
                     s.label.shape().str());
  }
  for (double v : s.input.to_vector()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("sample '" + s.id + "': input value outside [0, 1]");
    }
  }
  const auto g = s.label.to_vector();
  const std::int64_t hw = S * S;
  for (std::int64_t i = 0; i < hw; ++i) {
    double sum = 0.0;
    for (int c = 0; c < kNumClasses; ++c) sum += g[c * hw + i];
    if (std::abs(sum - 1.0) > 1e-6) {
      throw std::invalid_argument("sample '" + s.id + "': label not one-hot at pixel " +
                                  std::to_string(i));
    }
  }
}

std::vector<int> argmax_classes(const Tensor& map) {
  if (map.rank() != 3)
    throw ShapeError("argmax_classes expects C x H x W, got " + map.shape().str());
  const std::int64_t C = map.dim(0), hw = map.dim(1) * map.dim(2);
  std::vector<int> out(static_cast<std::size_t>(hw));
  dispatch(map.dtype(), [&]<typename T>() {
    auto d = map.data<T>();
    for (std::int64_t i = 0; i < hw; ++i) {
      int best = 0;
      for (std::int64_t c = 1; c < C; ++c) {
        if (d[c * hw + i] > d[best * hw + i]) best = static_cast<int>(c);
      }
      out[static_cast<std::size_t>(i)] = best;
    }
  });
  return out;
}

Tensor one_hot(const std::vector<int>& classes, std::int64_t height, std::int64_t width,
               DType dtype) {
  const std::int64_t hw = height * width;
  if (static_cast<std::int64_t>(classes.size()) != hw) {
    throw ShapeError("one_hot: class map size does not match " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  Tensor t = Tensor::zeros({kNumClasses, height, width}, dtype);
  dispatch(dtype, [&]<typename T>() {
    auto d = t.data<T>();
    for (std::int64_t i = 0; i < hw; ++i) {
      const int c = classes[static_cast<std::size_t>(i)];
      if (c < 0 || c >= kNumClasses) throw std::out_of_range("class index out of range");
      d[c * hw + i] = T(1);
    }
  });
  return t;
}

Tensor decode_label_rgb(const RgbImage& image) {
  require_image("decode_label_rgb", image.width, image.height, image.pixels.size(), 3);
  const std::size_t hw = static_cast<std::size_t>(image.width) * image.height;
  std::vector<int> classes(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    const std::uint8_t* px = &image.pixels[3 * i];
    int best = 0;
    for (int c = 1; c < 3; ++c) {
      if (px[c] > px[best]) best = c;
    }
    classes[i] = best;
  }
  return one_hot(classes, image.height, image.width);
}

RgbImage encode_label_rgb(const Tensor& label) {
  if (label.rank() != 3 || label.dim(0) != kNumClasses) {
    throw ShapeError("encode_label_rgb expects 3 x H x W, got " + label.shape().str());
  }
  RgbImage img;
  img.height = static_cast<int>(label.dim(1));
  img.width = static_cast<int>(label.dim(2));
  const auto classes = argmax_classes(label);
  img.pixels.assign(classes.size() * 3, 0);
  for (std::size_t i = 0; i < classes.size(); ++i) img.pixels[3 * i + classes[i]] = 255;
  return img;
}

Tensor assemble_input(const GrayImage& oct, const GrayImage& octa) {
  require_image("assemble_input (OCT)", oct.width, oct.height, oct.pixels.size(), 1);
  require_image("assemble_input (OCTA)", octa.width, octa.height, octa.pixels.size(), 1);
  if (oct.width != octa.width || oct.height != octa.height) {
    throw ShapeError("OCT image is " + std::to_string(oct.width) + "x" +
                     std::to_string(oct.height) + " but OCTA is " + std::to_string(octa.width) +
                     "x" + std::to_string(octa.height));
  }
  const std::size_t hw = oct.pixels.size();
  Tensor t = Tensor::zeros({2, oct.height, oct.width});
  auto d = t.data<float>();
  for (std::size_t i = 0; i < hw; ++i) {
    d[i] = static_cast<float>(oct.pixels[i] / 255.0);
    d[hw + i] = static_cast<float>(octa.pixels[i] / 255.0);
  }
  return t;
}

AugmentSpec AugmentSpec::none() { return {0.0, 0.0, 0.0, 1.0, 1.0, 0.0}; }

void AugmentSpec::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(flip_h_prob) || !prob(flip_v_prob)) {
    throw ConfigError("augment flip probabilities must lie in [0, 1]");
  }
  if (!(rotation_max_deg >= 0.0)) throw ConfigError("augment.rotation_max_deg must be >= 0");
  if (!(zoom_lo > 0.0 && zoom_lo <= 1.0 && zoom_hi >= 1.0)) {
    throw ConfigError("augment zoom range must satisfy 0 < lo <= 1 <= hi");
  }
  if (!(shift_max_frac >= 0.0 && shift_max_frac < 1.0)) {
    throw ConfigError("augment.shift_max_frac must lie in [0, 1)");
  }
}

AugmentTransform draw_transform(const AugmentSpec& spec, std::int64_t size, std::mt19937_64& rng) {
  spec.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  AugmentTransform t;
  t.flip_h = unit(rng) < spec.flip_h_prob;
  t.flip_v = unit(rng) < spec.flip_v_prob;
  t.rotation_deg = spec.rotation_max_deg * (2.0 * unit(rng) - 1.0);
  t.zoom = spec.zoom_lo + (spec.zoom_hi - spec.zoom_lo) * unit(rng);
  const double max_shift = spec.shift_max_frac * static_cast<double>(size);
  t.shift_x = max_shift * (2.0 * unit(rng) - 1.0);
  t.shift_y = max_shift * (2.0 * unit(rng) - 1.0);
  return t;
}

Sample apply_transform(const Sample& sample, const AugmentTransform& tf) {
  validate_sample(sample);
  const std::int64_t S = sample.size();
  const std::int64_t hw = S * S;
  const double center = static_cast<double>(S - 1) / 2.0;
  const double theta = tf.rotation_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);

  const Tensor in = sample.input.to(DType::float64);
  const auto src = in.data<double>();
  const auto src_classes = argmax_classes(sample.label);

  Tensor out_input = Tensor::zeros({2, S, S}, DType::float64);
  auto dst = out_input.data<double>();
  std::vector<int> classes(static_cast<std::size_t>(hw), kBackground);

  auto tap = [&](std::int64_t c, std::int64_t x, std::int64_t y) -> double {
    if (x < 0 || y < 0 || x >= S || y >= S) return 0.0;
    return src[c * hw + y * S + x];
  };

  for (std::int64_t y = 0; y < S; ++y) {
    for (std::int64_t x = 0; x < S; ++x) {
      // Inverse map: undo shift, zoom, rotation, then flips.
      const double ux = (static_cast<double>(x) - center - tf.shift_x) / tf.zoom;
      const double uy = (static_cast<double>(y) - center - tf.shift_y) / tf.zoom;
      double sx = cos_t * ux + sin_t * uy + center;
      double sy = -sin_t * ux + cos_t * uy + center;
      if (tf.flip_h) sx = static_cast<double>(S - 1) - sx;
      if (tf.flip_v) sy = static_cast<double>(S - 1) - sy;

      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const double ax = sx - fx0, ay = sy - fy0;
      const auto x0 = static_cast<std::int64_t>(fx0), y0 = static_cast<std::int64_t>(fy0);
      for (std::int64_t c = 0; c < 2; ++c) {
        const double v = (1 - ax) * (1 - ay) * tap(c, x0, y0) + ax * (1 - ay) * tap(c, x0 + 1, y0) +
                         (1 - ax) * ay * tap(c, x0, y0 + 1) + ax * ay * tap(c, x0 + 1, y0 + 1);
        dst[c * hw + y * S + x] = std::clamp(v, 0.0, 1.0);
      }

      const auto nx = static_cast<std::int64_t>(std::lround(sx));
      const auto ny = static_cast<std::int64_t>(std::lround(sy));
      if (nx >= 0 && ny >= 0 && nx < S && ny < S) {
        classes[static_cast<std::size_t>(y * S + x)] =
            src_classes[static_cast<std::size_t>(ny * S + nx)];
      }
    }
  }
  return {out_input.to(sample.input.dtype()), one_hot(classes, S, S, sample.label.dtype()),
          sample.id};
}

Sample augment(const Sample& sample, const AugmentSpec& spec, std::mt19937_64& rng) {
  return apply_transform(sample, draw_transform(spec, sample.size(), rng));
}

std::vector<std::size_t> FoldPlan::test_indices(int fold) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) idx.push_back(i);
  }
  return idx;
}

std::vector<std::size_t> FoldPlan::train_indices(int fold) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) idx.push_back(i);
  }
  return idx;
}

FoldPlan kfold_split(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (n < static_cast<std::size_t>(k)) {
    throw std::invalid_argument("kfold_split: " + std::to_string(n) + " samples cannot fill " +
                                std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FoldPlan plan;
  plan.k = k;
  plan.assignments.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) plan.assignments[order[i]] = static_cast<int>(i % k);
  return plan;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ b);
}

}  // namespace avnet
