#include "avnet/config_text.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace avnet {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void fail(const ConfigEntry& e, const std::string& what) {
  throw ConfigError("line " + std::to_string(e.line) + ": " + what + " (key '" + e.key + "')");
}

template <typename Number>
Number parse_number(const ConfigEntry& e, std::string_view text) {
  const std::string s = trim(text);
  Number value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) fail(e, "malformed number '" + s + "'");
  return value;
}

template <typename Number>
std::vector<Number> parse_list(const ConfigEntry& e, std::size_t expected) {
  std::vector<Number> out;
  std::string_view rest = e.value;
  while (true) {
    const auto comma = rest.find(',');
    out.push_back(parse_number<Number>(e, rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (out.size() != expected) {
    fail(e, "expected " + std::to_string(expected) + " comma-separated values");
  }
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

using Setter = std::function<void(const ConfigEntry&, ProgramConfig&)>;

template <typename Field>
Setter set_int(Field field) {
  return
      [field](const ConfigEntry& e, ProgramConfig& c) { field(c) = parse_number<int>(e, e.value); };
}

template <typename Field>
Setter set_real(Field field) {
  return [field](const ConfigEntry& e, ProgramConfig& c) {
    field(c) = parse_number<double>(e, e.value);
  };
}

template <typename Lo, typename Hi>
Setter set_range(Lo lo, Hi hi) {
  return [lo, hi](const ConfigEntry& e, ProgramConfig& c) {
    const auto v = parse_list<double>(e, 2);
    lo(c) = v[0];
    hi(c) = v[1];
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["seed"] = [](const ConfigEntry& e, ProgramConfig& c) {
      c.train.seed = parse_number<std::uint64_t>(e, e.value);
    };
    t["lr"] = set_real([](ProgramConfig& c) -> double& { return c.train.lr; });
    t["batch_size"] = set_int([](ProgramConfig& c) -> int& { return c.train.batch_size; });
    t["train_samples_per_fold"] =
        set_int([](ProgramConfig& c) -> int& { return c.train.train_samples_per_fold; });
    t["k_folds"] = set_int([](ProgramConfig& c) -> int& { return c.train.k_folds; });
    t["eval_every"] = set_int([](ProgramConfig& c) -> int& { return c.train.eval_every; });
    t["checkpoint_dir"] = [](const ConfigEntry& e, ProgramConfig& c) {
      c.train.checkpoint_dir = e.value;
    };
    t["loss_mode"] = [](const ConfigEntry& e, ProgramConfig& c) {
      if (e.value == "compound")
        c.train.loss_mode = LossMode::compound;
      else if (e.value == "dice_only")
        c.train.loss_mode = LossMode::dice_only;
      else
        fail(e, "loss_mode must be 'compound' or 'dice_only'");
    };

    t["model.preset"] = [](const ConfigEntry&, ProgramConfig&) {};  // handled up front
    t["model.dense_block_layers"] = [](const ConfigEntry& e, ProgramConfig& c) {
      const auto v = parse_list<int>(e, 4);
      std::copy(v.begin(), v.end(), c.train.model.dense_block_layers.begin());
    };
    t["model.decoder_channels"] = [](const ConfigEntry& e, ProgramConfig& c) {
      const auto v = parse_list<int>(e, 4);
      std::copy(v.begin(), v.end(), c.train.model.decoder_channels.begin());
    };
    t["model.growth_rate"] =
        set_int([](ProgramConfig& c) -> int& { return c.train.model.growth_rate; });
    t["model.stem_channels"] =
        set_int([](ProgramConfig& c) -> int& { return c.train.model.stem_channels; });
    t["model.transition_compression"] =
        set_real([](ProgramConfig& c) -> double& { return c.train.model.transition_compression; });
    t["model.bottleneck_factor"] =
        set_int([](ProgramConfig& c) -> int& { return c.train.model.bottleneck_factor; });
    t["model.num_classes"] =
        set_int([](ProgramConfig& c) -> int& { return c.train.model.num_classes; });
    t["model.input_channels"] =
        set_int([](ProgramConfig& c) -> int& { return c.train.model.input_channels; });
    t["model.input_size"] =
        set_int([](ProgramConfig& c) -> int& { return c.train.model.input_size; });

    t["loss.alpha"] = set_real([](ProgramConfig& c) -> double& { return c.train.loss.alpha; });
    t["loss.gamma"] = set_real([](ProgramConfig& c) -> double& { return c.train.loss.gamma; });
    t["loss.dice_smooth"] =
        set_real([](ProgramConfig& c) -> double& { return c.train.loss.dice_smooth; });
    t["loss.prob_clamp"] =
        set_real([](ProgramConfig& c) -> double& { return c.train.loss.prob_clamp; });

    t["augment.flip_h_prob"] =
        set_real([](ProgramConfig& c) -> double& { return c.train.augment.flip_h_prob; });
    t["augment.flip_v_prob"] =
        set_real([](ProgramConfig& c) -> double& { return c.train.augment.flip_v_prob; });
    t["augment.rotation_max_deg"] =
        set_real([](ProgramConfig& c) -> double& { return c.train.augment.rotation_max_deg; });
    t["augment.zoom_range"] =
        set_range([](ProgramConfig& c) -> double& { return c.train.augment.zoom_lo; },
                  [](ProgramConfig& c) -> double& { return c.train.augment.zoom_hi; });
    t["augment.shift_max_frac"] =
        set_real([](ProgramConfig& c) -> double& { return c.train.augment.shift_max_frac; });

    t["synth.count"] = set_int([](ProgramConfig& c) -> int& { return c.synth.count; });
    t["synth.size"] = set_int([](ProgramConfig& c) -> int& { return c.synth.size; });
    t["synth.vessels_per_image"] = [](const ConfigEntry& e, ProgramConfig& c) {
      const auto v = parse_list<int>(e, 2);
      c.synth.vessels_min = v[0];
      c.synth.vessels_max = v[1];
    };
    t["synth.vessel_width_px"] =
        set_range([](ProgramConfig& c) -> double& { return c.synth.width_min; },
                  [](ProgramConfig& c) -> double& { return c.synth.width_max; });
    t["synth.artery_oct_intensity"] =
        set_range([](ProgramConfig& c) -> double& { return c.synth.artery_oct_lo; },
                  [](ProgramConfig& c) -> double& { return c.synth.artery_oct_hi; });
    t["synth.vein_oct_intensity"] =
        set_range([](ProgramConfig& c) -> double& { return c.synth.vein_oct_lo; },
                  [](ProgramConfig& c) -> double& { return c.synth.vein_oct_hi; });
    t["synth.noise_sigma"] =
        set_real([](ProgramConfig& c) -> double& { return c.synth.noise_sigma; });
    return t;
  }();
  return table;
}

}  // namespace

std::vector<ConfigEntry> parse_key_values(std::string_view text) {
  std::vector<ConfigEntry> entries;
  int line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    const std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" +
                        trimmed + "'");
    }
    ConfigEntry e{trim(std::string_view(trimmed).substr(0, eq)),
                  trim(std::string_view(trimmed).substr(eq + 1)), line_no};
    if (e.key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    entries.push_back(std::move(e));
  }
  return entries;
}

void apply_entries(const std::vector<ConfigEntry>& entries, ProgramConfig& cfg) {
  const auto& table = setters();
  for (const auto& e : entries) {
    if (!table.contains(e.key)) fail(e, "unknown key");
  }
  for (const auto& e : entries) {
    if (e.key != "model.preset") continue;
    if (e.value == "canonical")
      cfg.train.model = AvNetConfig::canonical();
    else if (e.value == "desk")
      cfg.train.model = AvNetConfig::desk();
    else if (e.value == "tiny")
      cfg.train.model = AvNetConfig::tiny();
    else
      fail(e, "model.preset must be canonical, desk or tiny");
  }
  for (const auto& e : entries) table.at(e.key)(e, cfg);
}

ProgramConfig program_config_from_text(std::string_view text) {
  ProgramConfig cfg;
  apply_entries(parse_key_values(text), cfg);
  return cfg;
}

ProgramConfig load_program_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return program_config_from_text(ss.str());
}

std::string to_config_text(const TrainConfig& cfg) {
  auto list = [](const std::array<int, 4>& v) {
    return std::to_string(v[0]) + "," + std::to_string(v[1]) + "," + std::to_string(v[2]) + "," +
           std::to_string(v[3]);
  };
  const AvNetConfig& m = cfg.model;
  std::ostringstream os;
  os << "seed=" << cfg.seed << '\n'
     << "lr=" << num(cfg.lr) << '\n'
     << "batch_size=" << cfg.batch_size << '\n'
     << "train_samples_per_fold=" << cfg.train_samples_per_fold << '\n'
     << "k_folds=" << cfg.k_folds << '\n'
     << "eval_every=" << cfg.eval_every << '\n'
     << "loss_mode=" << (cfg.loss_mode == LossMode::compound ? "compound" : "dice_only") << '\n'
     << "model.dense_block_layers=" << list(m.dense_block_layers) << '\n'
     << "model.growth_rate=" << m.growth_rate << '\n'
     << "model.stem_channels=" << m.stem_channels << '\n'
     << "model.transition_compression=" << num(m.transition_compression) << '\n'
     << "model.decoder_channels=" << list(m.decoder_channels) << '\n'
     << "model.bottleneck_factor=" << m.bottleneck_factor << '\n'
     << "model.num_classes=" << m.num_classes << '\n'
     << "model.input_channels=" << m.input_channels << '\n'
     << "model.input_size=" << m.input_size << '\n'
     << "loss.alpha=" << num(cfg.loss.alpha) << '\n'
     << "loss.gamma=" << num(cfg.loss.gamma) << '\n'
     << "loss.dice_smooth=" << num(cfg.loss.dice_smooth) << '\n'
     << "loss.prob_clamp=" << num(cfg.loss.prob_clamp) << '\n'
     << "augment.flip_h_prob=" << num(cfg.augment.flip_h_prob) << '\n'
     << "augment.flip_v_prob=" << num(cfg.augment.flip_v_prob) << '\n'
     << "augment.rotation_max_deg=" << num(cfg.augment.rotation_max_deg) << '\n'
     << "augment.zoom_range=" << num(cfg.augment.zoom_lo) << ',' << num(cfg.augment.zoom_hi) << '\n'
     << "augment.shift_max_frac=" << num(cfg.augment.shift_max_frac) << '\n';
  return os.str();
}

TrainConfig train_config_from_text(std::string_view text) {
  return program_config_from_text(text).train;
}

}  // namespace avnet
