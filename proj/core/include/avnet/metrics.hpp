#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "avnet/data.hpp"

namespace avnet {

// One-vs-rest pixel counts per class.
struct ConfusionCounts {
  struct Counts {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::int64_t total() const { return tp + fp + fn + tn; }
    bool operator==(const Counts&) const = default;
  };
  std::array<Counts, kNumClasses> per_class{};

  ConfusionCounts& operator+=(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

// Argmax both 3 x H x W maps (ties to the lowest index) and count.
ConfusionCounts confusion(const Tensor& pred, const Tensor& truth);

// Fractions in [0, 1].
struct ClassMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
};

// accuracy = (TP+TN)/total, f1 = 2TP/(2TP+FP+FN), iou = TP/(TP+FP+FN).
// A class absent from both maps scores f1 = iou = 1.
ClassMetrics class_metrics(const ConfusionCounts::Counts& counts);
std::array<ClassMetrics, kNumClasses> per_class_metrics(const ConfusionCounts& counts);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation across folds
};

// Artery, vein and their average, in percent, aggregated across folds.
// Background is left out of the report.
struct FoldReport {
  struct Row {
    std::string name;
    MetricSummary accuracy, f1, iou;
    std::vector<ClassMetrics> per_fold;  // percent
  };

  std::vector<Row> rows;  // artery, vein, average
  std::size_t folds = 0;

  const Row& row(const std::string& name) const;

  // Header plus one line per row: mean±std columns followed by the raw
  // per-fold values. The ±std part is omitted for a single fold.
  std::string to_csv() const;
  // key=value lines, e.g. "average.f1.mean=82.805".
  std::string to_text() const;
  // Human-readable table.
  std::string to_table() const;
};

FoldReport aggregate_report(const std::vector<std::array<ClassMetrics, kNumClasses>>& per_fold);

}  // namespace avnet
