#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "avnet/parameter_store.hpp"

namespace avnet {

// In-memory form of a .avnw weight file.
//
// Layout (little-endian):
//   "AVNW" | u32 version (1) | u32 tensor_count
//   per tensor: u16 name_len | name (UTF-8) | u8 trainable | u8 rank |
//               rank x u64 dims | float32 payload, row-major
//   u32 config_len | config text (UTF-8 key=value lines)
struct WeightArchive {
  struct Item {
    std::string name;
    bool trainable = true;
    Tensor values;  // float32
  };

  std::vector<Item> tensors;
  std::string config_text;

  // Snapshot of every tensor in the store, converted to float32.
  static WeightArchive from_store(const ParameterStore& store, std::string config_text = {});
};

inline constexpr std::uint32_t kArchiveVersion = 1;

std::vector<std::uint8_t> encode_archive(const WeightArchive& archive);
// Throws ArchiveError on bad magic, unsupported version, truncation or
// trailing bytes.
WeightArchive decode_archive(const std::vector<std::uint8_t>& bytes);

void write_archive(const WeightArchive& archive, const std::filesystem::path& path);
WeightArchive read_archive(const std::filesystem::path& path);

}  // namespace avnet
