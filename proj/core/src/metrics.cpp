#include "avnet/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace avnet {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  for (int c = 0; c < kNumClasses; ++c) {
    per_class[c].tp += other.per_class[c].tp;
    per_class[c].fp += other.per_class[c].fp;
    per_class[c].fn += other.per_class[c].fn;
    per_class[c].tn += other.per_class[c].tn;
  }
  return *this;
}

ConfusionCounts confusion(const Tensor& pred, const Tensor& truth) {
  if (pred.rank() != 3 || pred.dim(0) != kNumClasses || pred.shape() != truth.shape()) {
    throw ShapeError("confusion: expected matching 3 x H x W maps, got " + pred.shape().str() +
                     " and " + truth.shape().str());
  }
  const auto p = argmax_classes(pred);
  const auto t = argmax_classes(truth);
  ConfusionCounts counts;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (int c = 0; c < kNumClasses; ++c) {
      const bool predicted = p[i] == c, actual = t[i] == c;
      auto& k = counts.per_class[c];
      if (predicted && actual)
        ++k.tp;
      else if (predicted)
        ++k.fp;
      else if (actual)
        ++k.fn;
      else
        ++k.tn;
    }
  }
  return counts;
}

ClassMetrics class_metrics(const ConfusionCounts::Counts& k) {
  ClassMetrics m;
  const auto total = static_cast<double>(k.total());
  m.accuracy = total > 0 ? static_cast<double>(k.tp + k.tn) / total : 1.0;
  const std::int64_t wrong = k.fp + k.fn;
  if (k.tp + wrong == 0) {
    m.f1 = 1.0;
    m.iou = 1.0;
  } else {
    m.f1 = 2.0 * static_cast<double>(k.tp) / static_cast<double>(2 * k.tp + wrong);
    m.iou = static_cast<double>(k.tp) / static_cast<double>(k.tp + wrong);
  }
  return m;
}

std::array<ClassMetrics, kNumClasses> per_class_metrics(const ConfusionCounts& counts) {
  std::array<ClassMetrics, kNumClasses> out;
  for (int c = 0; c < kNumClasses; ++c) out[c] = class_metrics(counts.per_class[c]);
  return out;
}

namespace {

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

FoldReport::Row make_row(std::string name, std::vector<ClassMetrics> per_fold) {
  FoldReport::Row row;
  row.name = std::move(name);
  std::vector<double> acc, f1, iou;
  for (const auto& m : per_fold) {
    acc.push_back(m.accuracy);
    f1.push_back(m.f1);
    iou.push_back(m.iou);
  }
  row.accuracy = summarize(acc);
  row.f1 = summarize(f1);
  row.iou = summarize(iou);
  row.per_fold = std::move(per_fold);
  return row;
}

std::string fmt(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
  return buf;
}

std::string summary_text(const MetricSummary& s, bool with_std) {
  std::string out = fmt(s.mean, 3);
  if (with_std) out += "±" + fmt(s.std, 3);
  return out;
}

}  // namespace

FoldReport aggregate_report(const std::vector<std::array<ClassMetrics, kNumClasses>>& per_fold) {
  if (per_fold.empty()) throw std::invalid_argument("aggregate_report needs at least one fold");
  constexpr int artery = static_cast<int>(AvClass::artery);
  constexpr int vein = static_cast<int>(AvClass::vein);
  std::vector<ClassMetrics> a, v, avg;
  for (const auto& fold : per_fold) {
    auto pct = [](const ClassMetrics& m) {
      return ClassMetrics{100.0 * m.accuracy, 100.0 * m.f1, 100.0 * m.iou};
    };
    const ClassMetrics ma = pct(fold[artery]);
    const ClassMetrics mv = pct(fold[vein]);
    a.push_back(ma);
    v.push_back(mv);
    avg.push_back(
        {(ma.accuracy + mv.accuracy) / 2.0, (ma.f1 + mv.f1) / 2.0, (ma.iou + mv.iou) / 2.0});
  }
  FoldReport report;
  report.folds = per_fold.size();
  report.rows.push_back(make_row("artery", std::move(a)));
  report.rows.push_back(make_row("vein", std::move(v)));
  report.rows.push_back(make_row("average", std::move(avg)));
  return report;
}

const FoldReport::Row& FoldReport::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw std::out_of_range("no report row '" + name + "'");
}

std::string FoldReport::to_csv() const {
  const bool with_std = folds > 1;
  std::ostringstream os;
  os << "row,accuracy,f1,iou";
  for (const char* metric : {"accuracy", "f1", "iou"}) {
    for (std::size_t f = 0; f < folds; ++f) os << ',' << metric << "_fold" << f;
  }
  os << '\n';
  for (const auto& r : rows) {
    os << r.name << ',' << summary_text(r.accuracy, with_std) << ',' << summary_text(r.f1, with_std)
       << ',' << summary_text(r.iou, with_std);
    for (std::size_t f = 0; f < folds; ++f) os << ',' << fmt(r.per_fold[f].accuracy, 6);
    for (std::size_t f = 0; f < folds; ++f) os << ',' << fmt(r.per_fold[f].f1, 6);
    for (std::size_t f = 0; f < folds; ++f) os << ',' << fmt(r.per_fold[f].iou, 6);
    os << '\n';
  }
  return os.str();
}

std::string FoldReport::to_text() const {
  std::ostringstream os;
  os << "folds=" << folds << '\n';
  for (const auto& r : rows) {
    const std::pair<const char*, const MetricSummary*> metrics[] = {
        {"accuracy", &r.accuracy}, {"f1", &r.f1}, {"iou", &r.iou}};
    for (const auto& [name, s] : metrics) {
      os << r.name << '.' << name << ".mean=" << fmt(s->mean, 6) << '\n';
      if (folds > 1) os << r.name << '.' << name << ".std=" << fmt(s->std, 6) << '\n';
    }
  }
  return os.str();
}

std::string FoldReport::to_table() const {
  const bool with_std = folds > 1;
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %20s %20s %20s\n", "", "Accuracy", "F1", "IOU");
  os << line;
  for (const auto& r : rows) {
    std::string name = r.name;
    name[0] = static_cast<char>(std::toupper(name[0]));
    auto cell = [&](const MetricSummary& s) {
      return with_std ? fmt(s.mean, 3) + " +/- " + fmt(s.std, 3) : fmt(s.mean, 3);
    };
    std::snprintf(line, sizeof(line), "%-10s %20s %20s %20s\n", name.c_str(),
                  cell(r.accuracy).c_str(), cell(r.f1).c_str(), cell(r.iou).c_str());
    os << line;
  }
  return os.str();
}

}  // namespace avnet
