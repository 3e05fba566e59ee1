#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "avnet/data.hpp"

namespace avnet {

void SynthSpec::validate() const {
  if (count < 1) throw ConfigError("synth.count must be >= 1");
  if (size < 32 || size % 32 != 0)
    throw ConfigError("synth.size must be a positive multiple of 32");
  if (vessels_min < 2 || vessels_max < vessels_min) {
    throw ConfigError("synth vessel count range must satisfy 2 <= min <= max");
  }
  if (!(width_min > 0.0 && width_max >= width_min)) {
    throw ConfigError("synth vessel width range must satisfy 0 < min <= max");
  }
  auto band_ok = [](double lo, double hi) { return lo >= 0.0 && hi <= 1.0 && lo <= hi; };
  if (!band_ok(artery_oct_lo, artery_oct_hi) || !band_ok(vein_oct_lo, vein_oct_hi)) {
    throw ConfigError("synth OCT intensity bands must satisfy 0 <= lo <= hi <= 1");
  }
  if (!(artery_oct_hi < vein_oct_lo || vein_oct_hi < artery_oct_lo)) {
    throw ConfigError("synth artery and vein OCT intensity bands must be disjoint");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("synth.noise_sigma must be >= 0");
}

namespace {

struct Point {
  double x, y;
};

// A point on a uniformly chosen image border.
Point border_point(int edge, double S, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> along(0.1 * S, 0.9 * S);
  const double t = along(rng);
  switch (edge) {
    case 0:
      return {t, 0.0};
    case 1:
      return {S - 1.0, t};
    case 2:
      return {t, S - 1.0};
    default:
      return {0.0, t};
  }
}

}  // namespace

Sample synth_sample(const SynthSpec& spec, std::uint64_t seed, int index) {
  spec.validate();
  std::mt19937_64 rng(seed ^ static_cast<std::uint64_t>(index));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> edge_dist(0, 3);
  std::normal_distribution<double> noise(0.0, 1.0);

  const int S = spec.size;
  const double Sd = S;
  const std::size_t hw = static_cast<std::size_t>(S) * S;
  const int artery = static_cast<int>(AvClass::artery);
  const int vein = static_cast<int>(AvClass::vein);
  const int background = static_cast<int>(AvClass::background);

  std::vector<int> classes;
  std::vector<double> oct, octa;
  for (;;) {
    classes.assign(hw, background);
    oct.assign(hw, 0.0);
    octa.assign(hw, 0.0);

    // Smooth low-frequency background reflectance.
    const double fx = 0.5 + 1.5 * unit(rng), fy = 0.5 + 1.5 * unit(rng);
    const double px = 2 * std::numbers::pi * unit(rng), py = 2 * std::numbers::pi * unit(rng);
    for (int y = 0; y < S; ++y) {
      for (int x = 0; x < S; ++x) {
        oct[y * S + x] = 0.15 + 0.05 * std::sin(2 * std::numbers::pi * fx * x / Sd + px) *
                                    std::sin(2 * std::numbers::pi * fy * y / Sd + py);
      }
    }

    std::uniform_int_distribution<int> count_dist(spec.vessels_min, spec.vessels_max);
    const int vessels = count_dist(rng);
    int cls = unit(rng) < 0.5 ? artery : vein;
    for (int v = 0; v < vessels; ++v, cls = (cls == artery ? vein : artery)) {
      const int e0 = edge_dist(rng);
      const int e1 = (e0 + 1 + std::uniform_int_distribution<int>(0, 2)(rng)) % 4;
      const Point p0 = border_point(e0, Sd, rng);
      const Point p2 = border_point(e1, Sd, rng);
      const Point p1{Sd * (0.2 + 0.6 * unit(rng)), Sd * (0.2 + 0.6 * unit(rng))};
      const double width = spec.width_min + (spec.width_max - spec.width_min) * unit(rng);
      const double radius = width / 2.0;
      const double oct_value =
          cls == artery ? spec.artery_oct_lo + (spec.artery_oct_hi - spec.artery_oct_lo) * unit(rng)
                        : spec.vein_oct_lo + (spec.vein_oct_hi - spec.vein_oct_lo) * unit(rng);
      const double flow = 0.85 + 0.15 * unit(rng);

      const int steps = 4 * S;
      const int reach = static_cast<int>(std::ceil(radius));
      for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / steps;
        const double a = (1 - t) * (1 - t), b = 2 * (1 - t) * t, c = t * t;
        const double cx = a * p0.x + b * p1.x + c * p2.x;
        const double cy = a * p0.y + b * p1.y + c * p2.y;
        const int ix = static_cast<int>(std::lround(cx)), iy = static_cast<int>(std::lround(cy));
        for (int y = std::max(0, iy - reach); y <= std::min(S - 1, iy + reach); ++y) {
          for (int x = std::max(0, ix - reach); x <= std::min(S - 1, ix + reach); ++x) {
            const double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy > radius * radius) continue;
            // Later vessels win at crossings.
            classes[y * S + x] = cls;
            oct[y * S + x] = oct_value;
            octa[y * S + x] = flow;
          }
        }
      }
    }
    const bool has_artery = std::find(classes.begin(), classes.end(), artery) != classes.end();
    const bool has_vein = std::find(classes.begin(), classes.end(), vein) != classes.end();
    const bool has_background =
        std::find(classes.begin(), classes.end(), background) != classes.end();
    if (has_artery && has_vein && has_background) break;
  }

  Sample sample;
  char id[32];
  std::snprintf(id, sizeof(id), "synth_%04d", index);
  sample.id = id;
  sample.input = Tensor::zeros({2, S, S});
  auto d = sample.input.data<float>();
  for (std::size_t i = 0; i < hw; ++i) {
    d[i] = static_cast<float>(std::clamp(oct[i] + spec.noise_sigma * noise(rng), 0.0, 1.0));
    d[hw + i] = static_cast<float>(std::clamp(octa[i] + spec.noise_sigma * noise(rng), 0.0, 1.0));
  }
  sample.label = one_hot(classes, S, S);
  return sample;
}

std::vector<Sample> synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) out.push_back(synth_sample(spec, seed, i));
  return out;
}

}  // namespace avnet
