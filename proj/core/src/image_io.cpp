#include "avnet/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

namespace avnet {

namespace {

template <typename Image>
Image read_png(const std::filesystem::path& path, png_uint_32 format, int channels) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + png.message);
  }
  png.format = format;
  Image img;
  img.width = static_cast<int>(png.width);
  img.height = static_cast<int>(png.height);
  img.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = png.message;
    png_image_free(&png);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * channels) {
    throw IoError("unexpected PNG layout in " + path.string());
  }
  return img;
}

template <typename Image>
void write_png(const std::filesystem::path& path, const Image& img, png_uint_32 format,
               int channels) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * channels) {
    throw IoError("refusing to write malformed image to " + path.string());
  }
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = format;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + png.message);
  }
}

}  // namespace

GrayImage read_gray_png(const std::filesystem::path& path) {
  return read_png<GrayImage>(path, PNG_FORMAT_GRAY, 1);
}

RgbImage read_rgb_png(const std::filesystem::path& path) {
  return read_png<RgbImage>(path, PNG_FORMAT_RGB, 3);
}

void write_gray_png(const std::filesystem::path& path, const GrayImage& image) {
  write_png(path, image, PNG_FORMAT_GRAY, 1);
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& image) {
  write_png(path, image, PNG_FORMAT_RGB, 3);
}

GrayImage to_gray_image(const Tensor& chw, std::int64_t channel) {
  if (chw.rank() != 3 || channel < 0 || channel >= chw.dim(0)) {
    throw ShapeError("to_gray_image: bad channel " + std::to_string(channel) + " for " +
                     chw.shape().str());
  }
  GrayImage img;
  img.height = static_cast<int>(chw.dim(1));
  img.width = static_cast<int>(chw.dim(2));
  const std::int64_t hw = chw.dim(1) * chw.dim(2);
  img.pixels.resize(static_cast<std::size_t>(hw));
  for (std::int64_t i = 0; i < hw; ++i) {
    const double v = std::clamp(chw.at(channel * hw + i), 0.0, 1.0);
    img.pixels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  const std::string suffix = "_oct.png";
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  std::vector<Sample> samples;
  for (const auto& id : ids) {
    Sample s;
    s.id = id;
    s.input = assemble_input(read_gray_png(dir / (id + "_oct.png")),
                             read_gray_png(dir / (id + "_octa.png")));
    s.label = decode_label_rgb(read_rgb_png(dir / (id + "_av.png")));
    if (s.label.dim(1) != s.input.dim(1) || s.label.dim(2) != s.input.dim(2)) {
      throw IoError("label size of '" + id + "' does not match its inputs");
    }
    if (s.input.dim(1) != s.input.dim(2)) throw IoError("sample '" + id + "' is not square");
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_sample(const std::filesystem::path& dir, const Sample& sample) {
  std::filesystem::create_directories(dir);
  write_gray_png(dir / (sample.id + "_oct.png"), to_gray_image(sample.input, 0));
  write_gray_png(dir / (sample.id + "_octa.png"), to_gray_image(sample.input, 1));
  write_rgb_png(dir / (sample.id + "_av.png"), encode_label_rgb(sample.label));
}

}  // namespace avnet
