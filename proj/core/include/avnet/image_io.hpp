#pragma once

#include <filesystem>
#include <vector>

#include "avnet/data.hpp"

namespace avnet {

// 8-bit PNG codec. Errors raise IoError.
GrayImage read_gray_png(const std::filesystem::path& path);
RgbImage read_rgb_png(const std::filesystem::path& path);
void write_gray_png(const std::filesystem::path& path, const GrayImage& image);
void write_rgb_png(const std::filesystem::path& path, const RgbImage& image);

// Channel c of a C x H x W tensor in [0, 1], rounded to 8 bits.
GrayImage to_gray_image(const Tensor& chw, std::int64_t channel);

// Dataset directory layout: <id>_oct.png, <id>_octa.png, <id>_av.png.
// Samples are returned sorted by id.
std::vector<Sample> load_dataset(const std::filesystem::path& dir);
void save_sample(const std::filesystem::path& dir, const Sample& sample);

}  // namespace avnet
