#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "avnet/archive.hpp"
#include "avnet/data.hpp"
#include "avnet/losses.hpp"
#include "avnet/metrics.hpp"
#include "avnet/nn.hpp"

namespace avnet {

enum class LossMode { compound, dice_only };

struct TrainConfig {
  AvNetConfig model = AvNetConfig::canonical();
  LossConfig loss;
  double lr = 1e-4;
  int batch_size = 8;
  int train_samples_per_fold = 3000;
  int k_folds = 5;
  std::uint64_t seed = 42;
  AugmentSpec augment;
  LossMode loss_mode = LossMode::compound;
  int eval_every = 50;
  std::string checkpoint_dir;

  void validate() const;
};

struct StepRecord {
  std::int64_t step = 0;  // 1-based
  std::int64_t batch_size = 0;
  double loss = 0.0;  // NaN in dry-run mode
};

struct EvalRecord {
  std::int64_t step = 0;
  std::array<ClassMetrics, kNumClasses> metrics{};
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  // Ids of the original samples behind every augmented draw, in draw order.
  std::vector<std::string> draw_ids;
};

struct TrainOptions {
  // Walk the batching schedule without building or optimizing a model.
  bool dry_run = false;
  std::function<void(const StepRecord&)> on_step;
};

struct FoldResult {
  WeightArchive archive;
  TrainHistory history;
};

// Stacks samples into N x 2 x S x S inputs and N x 3 x S x S labels.
std::pair<Tensor, Tensor> make_batch(const std::vector<const Sample*>& samples);

// Eval-mode confusion counts summed over the samples.
ConfusionCounts evaluate(AvNetModel& model, const std::vector<Sample>& samples, int batch_size);

// Trains a fresh model built from (cfg.model, cfg.seed) on
// cfg.train_samples_per_fold augmented draws cycled from train, in minibatches
// of cfg.batch_size (last partial batch kept). Throws TrainingDiverged on a
// non-finite loss.
FoldResult train_fold(const TrainConfig& cfg, const std::vector<Sample>& train,
                      const std::vector<Sample>& test, const TrainOptions& options = {});

struct CvResult {
  FoldReport report;
  FoldPlan plan;
  std::vector<TrainHistory> histories;
  std::vector<std::vector<std::string>> test_ids;  // per fold
};

// k-fold cross-validation. Each fold is re-initialized from a seed derived
// from (cfg.seed, fold). When cfg.checkpoint_dir is set, writes
// fold<i>.avnw per fold and report.csv there.
CvResult run_cv(const TrainConfig& cfg, const std::vector<Sample>& dataset,
                const TrainOptions& options = {});

// Archive helpers that carry the training config alongside the weights.
void save_archive(const ParameterStore& store, const TrainConfig& cfg,
                  const std::filesystem::path& path);

struct LoadedArchive {
  WeightArchive archive;
  TrainConfig config;
};
LoadedArchive load_archive(const std::filesystem::path& path);

// Builds the archived model and loads its weights strictly.
AvNetModel model_from_archive(const LoadedArchive& loaded);

}  // namespace avnet
