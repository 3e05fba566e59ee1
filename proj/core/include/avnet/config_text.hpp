#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "avnet/data.hpp"
#include "avnet/trainer.hpp"

namespace avnet {

// One key=value line of a config file. Blank lines and '#' comments are
// skipped; line numbers are 1-based.
struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<ConfigEntry> parse_key_values(std::string_view text);

// Everything a config file can set.
struct ProgramConfig {
  TrainConfig train;
  SynthSpec synth;
};

// Applies entries on top of cfg. "model.preset" (canonical, desk, tiny) is
// applied before any other model key regardless of its position. Unknown
// keys and malformed values raise ConfigError naming the line.
void apply_entries(const std::vector<ConfigEntry>& entries, ProgramConfig& cfg);

ProgramConfig load_program_config(const std::filesystem::path& path);
ProgramConfig program_config_from_text(std::string_view text);

// Round-trippable key=value form of a training config.
std::string to_config_text(const TrainConfig& cfg);
TrainConfig train_config_from_text(std::string_view text);

}  // namespace avnet
