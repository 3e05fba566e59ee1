#include "avnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "avnet/autodiff.hpp"
#include "avnet/config_text.hpp"
#include "avnet/optim.hpp"

namespace avnet {

namespace {

// Seed streams hanging off a fold's seed.
constexpr std::uint64_t kAugmentStream = 1;

bool is_identity(const AugmentSpec& s) {
  return s.flip_h_prob == 0.0 && s.flip_v_prob == 0.0 && s.rotation_max_deg == 0.0 &&
         s.zoom_lo == 1.0 && s.zoom_hi == 1.0 && s.shift_max_frac == 0.0;
}

void check_sizes(const std::vector<Sample>& samples, int size, const char* what) {
  for (const auto& s : samples) {
    validate_sample(s);
    if (s.size() != size) {
      throw ShapeError(std::string(what) + " sample '" + s.id + "' is " + std::to_string(s.size()) +
                       "x" + std::to_string(s.size()) + ", model expects " + std::to_string(size) +
                       "x" + std::to_string(size));
    }
  }
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  augment.validate();
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a positive finite number");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (train_samples_per_fold < batch_size) {
    throw ConfigError("train_samples_per_fold must be >= batch_size");
  }
  if (k_folds < 2) throw ConfigError("k_folds must be >= 2");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
}

std::pair<Tensor, Tensor> make_batch(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw std::invalid_argument("make_batch: empty batch");
  const std::int64_t n = static_cast<std::int64_t>(samples.size());
  const std::int64_t S = samples.front()->size();
  Tensor inputs = Tensor::zeros({n, 2, S, S});
  Tensor labels = Tensor::zeros({n, kNumClasses, S, S});
  auto in = inputs.data<float>();
  auto lab = labels.data<float>();
  const std::size_t in_stride = static_cast<std::size_t>(2 * S * S);
  const std::size_t lab_stride = static_cast<std::size_t>(kNumClasses * S * S);
  for (std::int64_t i = 0; i < n; ++i) {
    const Sample& s = *samples[static_cast<std::size_t>(i)];
    if (s.input.shape() != Shape{2, S, S} || s.label.shape() != Shape{kNumClasses, S, S}) {
      throw ShapeError("make_batch: sample '" + s.id + "' does not match the batch shape");
    }
    const Tensor x = s.input.to(DType::float32), y = s.label.to(DType::float32);
    std::copy_n(x.data<float>().begin(), in_stride, in.begin() + i * in_stride);
    std::copy_n(y.data<float>().begin(), lab_stride, lab.begin() + i * lab_stride);
  }
  return {inputs, labels};
}

ConfusionCounts evaluate(AvNetModel& model, const std::vector<Sample>& samples, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
  NoGradGuard no_grad;
  ConfusionCounts total;
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    std::vector<const Sample*> chunk;
    for (std::size_t i = begin; i < end; ++i) chunk.push_back(&samples[i]);
    auto [x, y] = make_batch(chunk);
    Tensor pred = model.forward(x.to(model.dtype()), Mode::eval).to(DType::float32);
    const std::int64_t S = x.dim(2);
    const std::size_t per = static_cast<std::size_t>(kNumClasses * S * S);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      auto p = pred.data<float>().subspan(i * per, per);
      auto g = y.data<float>().subspan(i * per, per);
      const std::vector<double> pv(p.begin(), p.end()), gv(g.begin(), g.end());
      total += confusion(Tensor::from_values({kNumClasses, S, S}, pv),
                         Tensor::from_values({kNumClasses, S, S}, gv));
    }
  }
  return total;
}

FoldResult train_fold(const TrainConfig& cfg, const std::vector<Sample>& train,
                      const std::vector<Sample>& test, const TrainOptions& options) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("train_fold: empty training set");
  check_sizes(train, cfg.model.input_size, "training");
  check_sizes(test, cfg.model.input_size, "test");

  FoldResult result;
  TrainHistory& history = result.history;
  const std::int64_t draws = cfg.train_samples_per_fold;
  const std::int64_t steps = (draws + cfg.batch_size - 1) / cfg.batch_size;

  if (options.dry_run) {
    for (std::int64_t step = 1; step <= steps; ++step) {
      const std::int64_t first = (step - 1) * cfg.batch_size;
      const std::int64_t n = std::min<std::int64_t>(cfg.batch_size, draws - first);
      for (std::int64_t d = first; d < first + n; ++d) {
        history.draw_ids.push_back(train[static_cast<std::size_t>(d) % train.size()].id);
      }
      StepRecord rec{step, n, std::numeric_limits<double>::quiet_NaN()};
      history.steps.push_back(rec);
      if (options.on_step) options.on_step(rec);
    }
    return result;
  }

  AvNetModel model = build_avnet(cfg.model, cfg.seed);
  AdamState adam(model.parameters(), AdamOptions{cfg.lr});
  const bool identity = is_identity(cfg.augment);

  auto run_eval = [&](std::int64_t step) {
    if (test.empty()) return;
    history.evals.push_back({step, per_class_metrics(evaluate(model, test, cfg.batch_size))});
  };

  for (std::int64_t step = 1; step <= steps; ++step) {
    const std::int64_t first = (step - 1) * cfg.batch_size;
    const std::int64_t n = std::min<std::int64_t>(cfg.batch_size, draws - first);
    std::vector<Sample> drawn;
    drawn.reserve(static_cast<std::size_t>(n));
    for (std::int64_t d = first; d < first + n; ++d) {
      const Sample& src = train[static_cast<std::size_t>(d) % train.size()];
      history.draw_ids.push_back(src.id);
      if (identity) {
        drawn.push_back(src);
      } else {
        std::mt19937_64 rng(derive_seed(cfg.seed, kAugmentStream, static_cast<std::uint64_t>(d)));
        drawn.push_back(augment(src, cfg.augment, rng));
      }
    }
    std::vector<const Sample*> ptrs;
    for (const auto& s : drawn) ptrs.push_back(&s);
    auto [x, y] = make_batch(ptrs);

    double loss_value = 0.0;
    {
      Tape tape;
      TapeScope scope(tape);
      Tensor pred = model.forward(x.to(model.dtype()), Mode::train);
      Tensor target = y.to(model.dtype());
      // NaN probabilities would otherwise trip the log-domain check inside the loss.
      const auto probs = pred.to_vector();
      if (!std::all_of(probs.begin(), probs.end(), [](double v) { return std::isfinite(v); })) {
        throw TrainingDiverged(step, std::numeric_limits<double>::quiet_NaN());
      }
      Tensor loss = cfg.loss_mode == LossMode::compound ? compound_loss(pred, target, cfg.loss)
                                                        : dice_loss(pred, target, cfg.loss);
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) throw TrainingDiverged(step, loss_value);
      tape.backward(loss);
    }
    adam_step(model.parameters(), adam);

    StepRecord rec{step, n, loss_value};
    history.steps.push_back(rec);
    if (options.on_step) options.on_step(rec);
    if (step % cfg.eval_every == 0 && step != steps) run_eval(step);
  }
  run_eval(steps);

  result.archive = WeightArchive::from_store(model.parameters(), to_config_text(cfg));
  return result;
}

CvResult run_cv(const TrainConfig& cfg, const std::vector<Sample>& dataset,
                const TrainOptions& options) {
  cfg.validate();
  if (dataset.size() < static_cast<std::size_t>(cfg.k_folds)) {
    throw std::invalid_argument("run_cv: " + std::to_string(dataset.size()) +
                                " samples cannot fill " + std::to_string(cfg.k_folds) + " folds");
  }
  CvResult out;
  out.plan = kfold_split(dataset.size(), cfg.k_folds, cfg.seed);
  std::vector<std::array<ClassMetrics, kNumClasses>> fold_metrics;

  const std::filesystem::path dir = cfg.checkpoint_dir;
  if (!dir.empty()) std::filesystem::create_directories(dir);

  for (int fold = 0; fold < cfg.k_folds; ++fold) {
    std::vector<Sample> train, test;
    for (std::size_t i : out.plan.train_indices(fold)) train.push_back(dataset[i]);
    for (std::size_t i : out.plan.test_indices(fold)) test.push_back(dataset[i]);

    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(fold));
    FoldResult r = train_fold(fold_cfg, train, test, options);

    std::vector<std::string> ids;
    for (const auto& s : test) ids.push_back(s.id);
    out.test_ids.push_back(std::move(ids));

    if (!options.dry_run) {
      fold_metrics.push_back(r.history.evals.back().metrics);
      if (!dir.empty()) {
        write_archive(r.archive, dir / ("fold" + std::to_string(fold) + ".avnw"));
      }
    }
    out.histories.push_back(std::move(r.history));
  }

  if (!options.dry_run) {
    out.report = aggregate_report(fold_metrics);
    if (!dir.empty()) {
      const std::string csv = out.report.to_csv();
      std::ofstream f(dir / "report.csv", std::ios::binary);
      if (!f || !(f << csv)) throw IoError("cannot write " + (dir / "report.csv").string());
    }
  }
  return out;
}

void save_archive(const ParameterStore& store, const TrainConfig& cfg,
                  const std::filesystem::path& path) {
  write_archive(WeightArchive::from_store(store, to_config_text(cfg)), path);
}

LoadedArchive load_archive(const std::filesystem::path& path) {
  LoadedArchive loaded;
  loaded.archive = read_archive(path);
  try {
    loaded.config = train_config_from_text(loaded.archive.config_text);
  } catch (const ConfigError& e) {
    throw ArchiveError(path.string() + ": embedded config is invalid: " + e.what());
  }
  return loaded;
}

AvNetModel model_from_archive(const LoadedArchive& loaded) {
  AvNetModel model = build_avnet(loaded.config.model, loaded.config.seed);
  load_pretrained(model, loaded.archive, /*strict=*/true);
  return model;
}

}  // namespace avnet
