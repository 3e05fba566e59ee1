#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "avnet/autodiff.hpp"
#include "avnet/config_text.hpp"
#include "avnet/gradcheck.hpp"
#include "avnet/image_io.hpp"
#include "avnet/metrics.hpp"
#include "avnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace avnet;

namespace {

enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kIo = 3,
  kDiverged = 4,
  kGradcheck = 5,
};

ProgramConfig load_config(const std::string& path) {
  return path.empty() ? ProgramConfig{} : load_program_config(path);
}

int cmd_synth(const std::string& config, const std::string& out,
              std::optional<std::uint64_t> seed) {
  ProgramConfig cfg = load_config(config);
  if (seed) cfg.train.seed = *seed;
  cfg.synth.validate();
  fs::create_directories(out);
  for (int i = 0; i < cfg.synth.count; ++i) {
    save_sample(out, synth_sample(cfg.synth, cfg.train.seed, i));
  }
  std::printf("wrote %d samples to %s\n", cfg.synth.count, out.c_str());
  return kOk;
}

int cmd_train(const std::string& config, const std::string& data, std::string out,
              std::optional<std::uint64_t> seed) {
  ProgramConfig cfg = load_config(config);
  if (seed) cfg.train.seed = *seed;
  if (!out.empty()) cfg.train.checkpoint_dir = out;
  if (cfg.train.checkpoint_dir.empty()) throw ConfigError("no output directory: pass --out");
  cfg.train.validate();

  const std::vector<Sample> dataset = load_dataset(data);
  std::printf("loaded %zu samples from %s\n", dataset.size(), data.c_str());

  int fold = 0;
  const std::int64_t steps =
      (cfg.train.train_samples_per_fold + cfg.train.batch_size - 1) / cfg.train.batch_size;
  TrainOptions options;
  options.on_step = [&](const StepRecord& r) {
    if (r.step == 1) std::printf("fold %d\n", fold);
    if (r.step % cfg.train.eval_every == 0 || r.step == steps) {
      std::printf("  step %lld/%lld loss %.6f\n", static_cast<long long>(r.step),
                  static_cast<long long>(steps), r.loss);
      std::fflush(stdout);
    }
    if (r.step == steps) ++fold;
  };
  const CvResult result = run_cv(cfg.train, dataset, options);
  std::cout << '\n' << result.report.to_table();
  std::printf("archives and report.csv written to %s\n", cfg.train.checkpoint_dir.c_str());
  return kOk;
}

Tensor predict_one(AvNetModel& model, const Tensor& input) {
  NoGradGuard no_grad;
  const std::int64_t S = input.dim(1);
  Tensor batch = Tensor::zeros({1, 2, S, S}, model.dtype());
  batch.copy_from(Tensor::from_values({1, 2, S, S}, input.to_vector()));
  const Tensor prob = model.forward(batch, Mode::eval);
  return Tensor::from_values({kNumClasses, S, S}, prob.to_vector());
}

void require_size(const AvNetModel& model, std::int64_t size, const std::string& what) {
  const int expected = model.config().input_size;
  if (size != expected) {
    throw ShapeError(what + " is " + std::to_string(size) + "x" + std::to_string(size) +
                     " but the model expects " + std::to_string(expected) + "x" +
                     std::to_string(expected));
  }
}

int cmd_predict(const std::string& weights, const std::string& oct, const std::string& octa,
                const std::string& out) {
  AvNetModel model = model_from_archive(load_archive(weights));
  const GrayImage a = read_gray_png(oct), b = read_gray_png(octa);
  const Tensor input = assemble_input(a, b);
  if (input.dim(1) != input.dim(2)) {
    throw ShapeError("input images must be square, got " + std::to_string(a.width) + "x" +
                     std::to_string(a.height));
  }
  require_size(model, input.dim(1), "input image");
  write_rgb_png(out, encode_label_rgb(predict_one(model, input)));
  return kOk;
}

int cmd_eval(const std::string& weights, const std::string& data, bool passthrough) {
  if (!passthrough && weights.empty())
    throw ConfigError("--weights is required without --passthrough");
  const std::vector<Sample> dataset = load_dataset(data);
  if (dataset.empty()) throw IoError("no samples found in " + data);

  std::optional<AvNetModel> model;
  if (!passthrough) model.emplace(model_from_archive(load_archive(weights)));

  std::vector<std::array<ClassMetrics, kNumClasses>> per_sample;
  ConfusionCounts pooled;
  for (const auto& s : dataset) {
    Tensor pred = s.label;
    if (model) {
      require_size(*model, s.size(), "sample '" + s.id + "'");
      pred = predict_one(*model, s.input);
    }
    const ConfusionCounts c = confusion(pred, s.label);
    pooled += c;
    per_sample.push_back(per_class_metrics(c));
  }
  const FoldReport report = aggregate_report(per_sample);
  std::printf("%zu samples (mean%s over samples, percent)\n", dataset.size(),
              dataset.size() > 1 ? " +/- std" : "");
  std::cout << report.to_table();

  const auto m = per_class_metrics(pooled);
  const int a = static_cast<int>(AvClass::artery), v = static_cast<int>(AvClass::vein);
  std::printf("pooled pixels: artery f1 %.3f, vein f1 %.3f, average f1 %.3f\n", 100 * m[a].f1,
              100 * m[v].f1, 50 * (m[a].f1 + m[v].f1));
  return kOk;
}

int cmd_gradcheck(std::uint64_t seed, const std::string& corrupt_op) {
  if (!corrupt_op.empty()) testing::set_backward_corruption(corrupt_op);
  const auto results = run_gradcheck(seed);
  std::string failing;
  for (const auto& r : results) {
    std::printf("%-24s max_rel_error %.3e  tol %.0e  %s\n", r.name.c_str(), r.max_rel_error,
                r.tolerance, r.passed() ? "ok" : "FAIL");
    if (!r.passed()) failing += (failing.empty() ? "" : ", ") + r.name;
  }
  if (!failing.empty()) {
    std::fprintf(stderr, "gradcheck failed: %s\n", failing.c_str());
    return kGradcheck;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AV-Net artery/vein segmentation"};
  app.require_subcommand(1);

  std::string config, out, data, weights, oct, octa, corrupt_op;
  std::optional<std::uint64_t> seed;
  bool passthrough = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", config, "key=value config file")->check(CLI::ExistingFile);
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--seed", seed, "Random seed (default 42)");

  auto* train = app.add_subcommand("train", "k-fold cross-validated training");
  train->add_option("--config", config, "key=value config file")->check(CLI::ExistingFile);
  train->add_option("--data", data, "Dataset directory")->required();
  train->add_option("--out", out, "Directory for fold archives and report.csv");
  train->add_option("--seed", seed, "Random seed (default 42)");

  auto* predict = app.add_subcommand("predict", "Predict an AV map");
  predict->add_option("--weights", weights, "Weight archive (.avnw)")->required();
  predict->add_option("--oct", oct, "Enface OCT PNG")->required();
  predict->add_option("--octa", octa, "OCTA PNG")->required();
  predict->add_option("--out", out, "Output RGB PNG")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a labelled dataset");
  eval->add_option("--weights", weights, "Weight archive (.avnw)");
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_flag("--passthrough", passthrough, "Score the labels against themselves");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--seed", seed, "Random seed (default 42)");
  gradcheck->add_option("--corrupt-op", corrupt_op)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*synth) return cmd_synth(config, out, seed);
    if (*train) return cmd_train(config, data, out, seed);
    if (*predict) return cmd_predict(weights, oct, octa, out);
    if (*eval) return cmd_eval(weights, data, passthrough);
    if (*gradcheck) return cmd_gradcheck(seed.value_or(42), corrupt_op);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const TrainingDiverged& e) {
    std::fprintf(stderr, "training diverged: %s\n", e.what());
    return kDiverged;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return kIo;
  } catch (const ParameterError& e) {
    std::fprintf(stderr, "weights error: %s\n", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
