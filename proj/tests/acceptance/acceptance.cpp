// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <string>

#include "avnet/autodiff.hpp"
#include "avnet/gradcheck.hpp"
#include "avnet/image_io.hpp"
#include "avnet/losses.hpp"
#include "avnet/metrics.hpp"
#include "avnet/trainer.hpp"
#include "oracles.hpp"

using namespace avnet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Criterion 1: losses against straight-loop oracles.
Outcome loss_oracles() {
  Outcome o;
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> batch(1, 2), classes(2, 3), side(1, 8);
  const LossConfig c;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = batch(rng), l = classes(rng), h = side(rng), w = side(rng);
    Tensor p = oracle::random_probs(n, l, h, w, rng);
    Tensor g = oracle::random_one_hot(n, l, h, w, rng);
    worst = std::max(worst, rel(dice_loss(p, g, c).item(), oracle::dice(p, g, c.dice_smooth)));
    worst = std::max(worst, rel(focal_loss(p, g, c).item(),
                                oracle::focal(p, g, c.alpha, c.gamma, c.prob_clamp)));
  }
  o.require(worst < 1e-6, "max relative error < 1e-6");
  o.note("100 tensors, max rel error " + fmt("%.2e", worst));
  return o;
}

// Criterion 2: scalar hand values.
Outcome hand_values() {
  Outcome o;
  auto t = [](std::initializer_list<double> v, std::int64_t l) {
    return Tensor::from_values({1, l, 1, static_cast<std::int64_t>(v.size()) / l}, v,
                               DType::float64);
  };
  const double pos = focal_loss(t({0.5}, 1), t({1}, 1)).item();
  const double neg = focal_loss(t({0.5}, 1), t({0}, 1)).item();
  LossConfig smooth;
  smooth.dice_smooth = 1e-12;
  const double third = dice_loss(t({0.5, 0.5}, 1), t({1, 0}, 1), smooth).item();
  o.require(std::abs(pos - 0.0433217) <= 1e-6, "focal(g=1, p=0.5) = 0.0433217");
  o.require(std::abs(neg - 0.1299650) <= 1e-6, "focal(g=0, p=0.5) = 0.1299650");
  o.require(std::abs(third - 1.0 / 3.0) <= 1e-6, "dice = 1/3");
  o.note("focal " + fmt("%.7f", pos) + " / " + fmt("%.7f", neg) + ", dice " + fmt("%.7f", third));
  return o;
}

// Criterion 3: the finite-difference suite.
Outcome gradient_suite() {
  Outcome o;
  const auto results = run_gradcheck(42);
  std::set<std::string> names;
  double worst_op = 0, worst_bn = 0;
  for (const auto& r : results) {
    names.insert(r.name);
    o.require(r.passed(), r.name + " within " + fmt("%.0e", r.tolerance));
    if (r.name == "avnet_tiny_end_to_end") {
      o.require(r.checked >= 100, "end-to-end check covers >= 100 parameters");
      o.require(r.tolerance <= 1e-3, "end-to-end tolerance 1e-3");
      o.note("tiny AV-Net " + std::to_string(r.checked) + " params, max rel " +
             fmt("%.2e", r.max_rel_error));
    } else if (r.name.rfind("batch_norm", 0) == 0) {
      o.require(r.tolerance <= 1e-3, r.name + " tolerance 1e-3");
      worst_bn = std::max(worst_bn, r.max_rel_error);
    } else {
      o.require(r.tolerance <= 1e-4, r.name + " tolerance 1e-4");
      worst_op = std::max(worst_op, r.max_rel_error);
    }
  }
  for (const char* op : {"conv2d",
                         "batch_norm2d",
                         "relu",
                         "softmax_channels",
                         "avg_pool2d",
                         "upsample_nearest2x",
                         "concat_channels",
                         "slice_channels",
                         "add",
                         "sub",
                         "mul",
                         "div",
                         "log",
                         "pow_scalar",
                         "clamp",
                         "sum_all",
                         "channel_sum",
                         "dice_loss",
                         "focal_loss",
                         "avnet_tiny_end_to_end"}) {
    o.require(names.count(op) == 1, std::string("suite covers ") + op);
  }
  o.note(std::to_string(results.size()) + " checks, ops max " + fmt("%.2e", worst_op) +
         ", batch norm max " + fmt("%.2e", worst_bn));
  return o;
}

// Criterion 4: the desk model memorises four samples.
Outcome overfit() {
  Outcome o;
  SynthSpec spec;
  spec.count = 4;
  spec.size = 64;
  const auto data = synth_generate(spec, 42);
  TrainConfig cfg;
  cfg.model = AvNetConfig::desk();
  cfg.augment = AugmentSpec::none();
  cfg.lr = 1e-4;
  cfg.batch_size = 4;
  cfg.train_samples_per_fold = 2000;
  cfg.eval_every = 100;
  const FoldResult res = train_fold(cfg, data, data);
  const auto& steps = res.history.steps;
  o.require(steps.size() == 500, "500 steps");
  bool finite = true;
  for (const auto& s : steps) finite = finite && std::isfinite(s.loss);
  o.require(finite, "finite loss trace");
  o.require(steps.back().loss < steps.front().loss, "loss at step 500 < loss at step 1");

  const auto& m = res.history.evals.back().metrics;
  const double f1 =
      (m[static_cast<int>(AvClass::artery)].f1 + m[static_cast<int>(AvClass::vein)].f1) / 2;
  AvNetModel model = model_from_archive({res.archive, cfg});
  auto [x, y] = make_batch({&data[0], &data[1], &data[2], &data[3]});
  double dice = 0;
  {
    NoGradGuard guard;
    dice = dice_loss(model.forward(x, Mode::eval), y).item();
  }
  o.require(f1 >= 0.90, "mean artery+vein F1 >= 0.90");
  o.require(dice <= 0.15, "dice loss <= 0.15");
  o.note("loss " + fmt("%.4f", steps.front().loss) + " -> " + fmt("%.4f", steps.back().loss) +
         ", F1 " + fmt("%.4f", f1) + ", dice " + fmt("%.4f", dice));
  return o;
}

// Criterion 5: cross-validation shape, plus the averaging rule on a real run.
Outcome protocol_shape() {
  Outcome o;
  SynthSpec spec;
  spec.count = 40;
  spec.size = 64;
  const auto data = synth_generate(spec, 7);
  TrainConfig cfg;
  cfg.model = AvNetConfig::desk();
  cfg.batch_size = 8;
  cfg.train_samples_per_fold = 3000;
  cfg.k_folds = 5;
  TrainOptions dry;
  dry.dry_run = true;
  const CvResult plan = run_cv(cfg, data, dry);
  o.require(plan.histories.size() == 5, "5 folds");
  std::set<std::string> tested;
  for (std::size_t f = 0; f < plan.histories.size(); ++f) {
    o.require(plan.test_ids[f].size() == 8, "8 test samples per fold");
    o.require(plan.histories[f].steps.size() == 375, "375 steps per fold");
    const std::set<std::string> test(plan.test_ids[f].begin(), plan.test_ids[f].end());
    for (const auto& id : plan.histories[f].draw_ids) {
      if (test.count(id) != 0) o.require(false, "test sample drawn for training");
    }
    tested.insert(test.begin(), test.end());
  }
  o.require(tested.size() == 40, "folds cover all 40 samples");

  cfg.train_samples_per_fold = 16;
  const CvResult cv = run_cv(cfg, data);
  const auto& rep = cv.report;
  o.require(rep.rows.size() == 3 && rep.rows[0].name == "artery" && rep.rows[1].name == "vein" &&
                rep.rows[2].name == "average",
            "rows artery, vein, average");
  for (std::size_t f = 0; f < rep.folds; ++f) {
    const auto& a = rep.row("artery").per_fold[f];
    const auto& v = rep.row("vein").per_fold[f];
    const auto& avg = rep.row("average").per_fold[f];
    o.require(avg.accuracy == (a.accuracy + v.accuracy) / 2 && avg.f1 == (a.f1 + v.f1) / 2 &&
                  avg.iou == (a.iou + v.iou) / 2,
              "average row is the exact artery/vein mean");
  }
  o.note("5 folds x 8 test, 375 dry-run steps each, average F1 " +
         fmt("%.3f", rep.row("average").f1.mean) + " after 2 steps/fold");
  return o;
}

// Criterion 6: parameter budget and depth of the canonical model.
Outcome capacity() {
  Outcome o;
  AvNetModel model = build_avnet(AvNetConfig::canonical(), 42);
  const auto params = count_parameters(model);
  const int convs = model.conv_layer_count();
  o.require(params < 13'800'000, "parameters < 13.8M");
  o.require(convs >= 80, ">= 80 convolution layers");
  o.note(std::to_string(params) + " trainable parameters, " + std::to_string(convs) +
         " convolution layers");
  return o;
}

// Criterion 7: metrics against a pixel loop, plus the row-averaging rule.
Outcome metrics_equivalence() {
  Outcome o;
  std::mt19937_64 rng(77);
  auto chw = [](const Tensor& t) {
    return Tensor::from_values({t.dim(1), t.dim(2), t.dim(3)}, t.to_vector(), DType::float64);
  };
  double worst = 0;
  bool counts_equal = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const Tensor pred = chw(oracle::random_probs(1, 3, 8, 8, rng));
    const Tensor truth = chw(oracle::random_one_hot(1, 3, 8, 8, rng));
    const auto got = confusion(pred, truth);
    const auto want = oracle::confusion(pred, truth);
    const auto m = per_class_metrics(got);
    for (int c = 0; c < 3; ++c) {
      const auto& g = got.per_class[c];
      const auto& w = want[c];
      counts_equal = counts_equal && g.tp == w.tp && g.fp == w.fp && g.fn == w.fn && g.tn == w.tn;
      const double denom = static_cast<double>(w.tp + w.fp + w.fn);
      const double acc = static_cast<double>(w.tp + w.tn) / 64.0;
      const double f1 = denom == 0 ? 1.0 : 2.0 * w.tp / (2.0 * w.tp + w.fp + w.fn);
      const double iou = denom == 0 ? 1.0 : w.tp / denom;
      worst = std::max(
          {worst, std::abs(m[c].accuracy - acc), std::abs(m[c].f1 - f1), std::abs(m[c].iou - iou)});
    }
  }
  o.require(counts_equal, "counts equal");
  o.require(worst <= 1e-12, "ratios within 1e-12");

  std::array<ClassMetrics, kNumClasses> fold{};
  fold[static_cast<int>(AvClass::artery)].accuracy = 0.86705;
  fold[static_cast<int>(AvClass::vein)].accuracy = 0.86798;
  const double avg = aggregate_report({fold}).row("average").accuracy.mean;
  o.require(std::abs(avg - 86.7515) < 1e-9, "average accuracy 86.7515");
  o.require(std::abs(avg - 86.751) < 1e-3, "rounds to 86.751");
  o.note("1000 pairs, max ratio error " + fmt("%.1e", worst) + ", averaged accuracy " +
         fmt("%.4f", avg));
  return o;
}

// Criterion 8: determinism and bit-exact round trips.
Outcome determinism() {
  Outcome o;
  SynthSpec spec;
  spec.count = 6;
  spec.size = 32;
  const auto a = synth_generate(spec, 5), b = synth_generate(spec, 5);
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && a[i].input.bit_equal(b[i].input) && a[i].label.bit_equal(b[i].label);
  }
  o.require(same, "synthetic datasets bit-identical");

  TrainConfig cfg;
  cfg.model = AvNetConfig::tiny();
  cfg.batch_size = 2;
  cfg.train_samples_per_fold = 6;
  cfg.k_folds = 3;
  cfg.eval_every = 2;
  const auto root = fs::temp_directory_path() / "avnet_acceptance";
  fs::remove_all(root);
  std::vector<std::vector<double>> traces;
  for (const char* run : {"r1", "r2"}) {
    cfg.checkpoint_dir = (root / run).string();
    const CvResult cv = run_cv(cfg, a);
    std::vector<double> trace;
    for (const auto& h : cv.histories) {
      for (const auto& s : h.steps) trace.push_back(s.loss);
    }
    traces.push_back(trace);
  }
  o.require(traces[0] == traces[1], "loss traces bit-identical");
  o.require(slurp(root / "r1" / "report.csv") == slurp(root / "r2" / "report.csv"),
            "report.csv bit-identical");

  const auto weights = root / "r1" / "fold0.avnw";
  const LoadedArchive loaded = load_archive(weights);
  const auto reencoded = encode_archive(loaded.archive);
  o.require(std::string(reencoded.begin(), reencoded.end()) == slurp(weights),
            "archive load/save bit-exact");
  AvNetModel model = model_from_archive(loaded);
  const auto snapshot = WeightArchive::from_store(model.parameters(), loaded.archive.config_text);
  o.require(encode_archive(snapshot) == reencoded, "strict load reproduces every tensor");

  std::mt19937_64 rng(3);
  const std::uint8_t colors[3][3] = {{255, 0, 0}, {0, 255, 0}, {0, 0, 255}};
  RgbImage img{48, 40, {}};
  for (int i = 0; i < img.width * img.height; ++i) {
    const auto& c = colors[rng() % 3];
    img.pixels.insert(img.pixels.end(), c, c + 3);
  }
  o.require(encode_label_rgb(decode_label_rgb(img)) == img, "label codec round trip");
  write_rgb_png(root / "codec.png", img);
  o.require(read_rgb_png(root / "codec.png") == img, "PNG round trip");
  fs::remove_all(root);
  o.note(std::to_string(traces[0].size()) + " loss values compared across two CV runs");
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const Criterion criteria[] = {
      {"1 loss oracle equivalence", 10, loss_oracles},
      {"2 hand values", 10, hand_values},
      {"3 gradient suite", 300, gradient_suite},
      {"4 overfit learnability", 600, overfit},
      {"5 protocol shape", 60, protocol_shape},
      {"6 capacity", 60, capacity},
      {"7 metrics equivalence", 60, metrics_equivalence},
      {"8 determinism and round trips", 300, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(secs <= c.budget_s, "runtime within " + fmt("%.0f s", c.budget_s));
    failures += o.ok ? 0 : 1;
    std::printf("%s criterion %s: %s (%.1f s)\n", o.ok ? "PASS" : "FAIL", c.name, o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures,
              std::size(criteria));
  return failures == 0 ? 0 : 1;
}
