#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "avnet/tensor.hpp"

namespace avnet {

// Label channel order mirrors the R, G, B channels of an AV map.
enum class AvClass : int { artery = 0, background = 1, vein = 2 };
inline constexpr int kNumClasses = 3;

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  bool operator==(const GrayImage&) const = default;
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved RGB

  bool operator==(const RgbImage&) const = default;
};

struct Sample {
  Tensor input;  // 2 x S x S: enface OCT, OCTA, values in [0, 1]
  Tensor label;  // 3 x S x S one-hot: artery, background, vein
  std::string id;

  std::int64_t size() const { return input.dim(1); }
};

// Throws std::invalid_argument if shapes, input range or one-hot validity
// are violated.
void validate_sample(const Sample& sample);

// Per-pixel argmax over (R, G, B) -> (artery, background, vein); ties go to
// the lower class index.
Tensor decode_label_rgb(const RgbImage& image);

// Per-pixel argmax of a 3 x H x W class map -> pure red, green or blue.
RgbImage encode_label_rgb(const Tensor& label);

// Stacks [OCT, OCTA] scaled by 1/255. No other preprocessing.
Tensor assemble_input(const GrayImage& oct, const GrayImage& octa);

// Per-pixel class index (argmax, lowest index on ties) of a C x H x W map.
std::vector<int> argmax_classes(const Tensor& map);
Tensor one_hot(const std::vector<int>& classes, std::int64_t height, std::int64_t width,
               DType dtype = DType::float32);

struct AugmentSpec {
  double flip_h_prob = 0.5;
  double flip_v_prob = 0.5;
  double rotation_max_deg = 15.0;
  double zoom_lo = 0.9;
  double zoom_hi = 1.1;
  double shift_max_frac = 0.1;

  static AugmentSpec none();
  void validate() const;
};

// One concrete geometric transform: flips, then rotation about the image
// center, zoom, and shift in pixels.
struct AugmentTransform {
  bool flip_h = false;
  bool flip_v = false;
  double rotation_deg = 0.0;
  double zoom = 1.0;
  double shift_x = 0.0;
  double shift_y = 0.0;
};

AugmentTransform draw_transform(const AugmentSpec& spec, std::int64_t size, std::mt19937_64& rng);

// Bilinear resampling for the input, nearest-neighbour for the label.
// Out-of-frame pixels become background with zero intensity.
Sample apply_transform(const Sample& sample, const AugmentTransform& transform);

Sample augment(const Sample& sample, const AugmentSpec& spec, std::mt19937_64& rng);

struct FoldPlan {
  int k = 0;
  std::vector<int> assignments;  // fold index per sample

  std::vector<std::size_t> test_indices(int fold) const;
  std::vector<std::size_t> train_indices(int fold) const;
};

// Seeded permutation followed by round-robin fold assignment.
FoldPlan kfold_split(std::size_t n, int k, std::uint64_t seed);

struct SynthSpec {
  int count = 40;
  int size = 256;
  int vessels_min = 3;
  int vessels_max = 6;
  double width_min = 2.0;
  double width_max = 5.0;
  double artery_oct_lo = 0.65;
  double artery_oct_hi = 0.85;
  double vein_oct_lo = 0.30;
  double vein_oct_hi = 0.50;
  double noise_sigma = 0.05;

  void validate() const;
};

// Procedural OCT/OCTA pairs with vessel labels. Sample i is drawn from its
// own generator seeded with seed ^ i; every image contains at least one
// artery and one vein.
std::vector<Sample> synth_generate(const SynthSpec& spec, std::uint64_t seed);
Sample synth_sample(const SynthSpec& spec, std::uint64_t seed, int index);

// Mixes a base seed with stream indices into an independent 64-bit seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace avnet
