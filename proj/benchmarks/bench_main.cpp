#include <benchmark/benchmark.h>

#include <random>

#include "avnet/autodiff.hpp"
#include "avnet/losses.hpp"
#include "avnet/metrics.hpp"
#include "avnet/nn.hpp"
#include "avnet/ops.hpp"
#include "avnet/trainer.hpp"

using namespace avnet;

namespace {

Tensor noise(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  Tensor t = Tensor::zeros(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, u(rng));
  return t;
}

// args: channels in/out, spatial size
void BM_Conv3x3(benchmark::State& state) {
  const auto c = state.range(0), s = state.range(1);
  const Tensor x = noise({4, c, s, s}, 1), w = noise({c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, Tensor(), 1, 1));
  state.SetItemsProcessed(state.iterations() * 4 * c * c * 9 * s * s);
}
BENCHMARK(BM_Conv3x3)
    ->Args({16, 64})
    ->Args({64, 32})
    ->Args({128, 16})
    ->Unit(benchmark::kMillisecond);

void BM_Conv3x3Backward(benchmark::State& state) {
  const auto c = state.range(0), s = state.range(1);
  Tensor x = noise({4, c, s, s}, 1), w = noise({c, c, 3, 3}, 2);
  w.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(ops::sum_all(ops::conv2d(x, w, Tensor(), 1, 1)));
    w.clear_grad();
  }
}
BENCHMARK(BM_Conv3x3Backward)->Args({16, 64})->Args({64, 32})->Unit(benchmark::kMillisecond);

void BM_BatchNormTrain(benchmark::State& state) {
  const Tensor x = noise({8, 64, 32, 32}, 3);
  Tensor gamma = Tensor::full({64}, 1.0), beta = Tensor::zeros({64});
  Tensor mean = Tensor::zeros({64}), var = Tensor::full({64}, 1.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::batch_norm2d(x, gamma, beta, mean, var, ops::Mode::train));
  }
}
BENCHMARK(BM_BatchNormTrain)->Unit(benchmark::kMillisecond);

void BM_DeskForward(benchmark::State& state) {
  AvNetModel model = build_avnet(AvNetConfig::desk(), 1);
  const Tensor x = noise({4, 2, 64, 64}, 4);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x, Mode::eval));
}
BENCHMARK(BM_DeskForward)->Unit(benchmark::kMillisecond);

void BM_DeskTrainStep(benchmark::State& state) {
  SynthSpec spec;
  spec.count = 4;
  spec.size = 64;
  const auto data = synth_generate(spec, 5);
  TrainConfig cfg;
  cfg.model = AvNetConfig::desk();
  cfg.augment = AugmentSpec::none();
  cfg.batch_size = 4;
  cfg.train_samples_per_fold = 4;
  for (auto _ : state) benchmark::DoNotOptimize(train_fold(cfg, data, {}));
}
BENCHMARK(BM_DeskTrainStep)->Unit(benchmark::kMillisecond);

void BM_CompoundLoss(benchmark::State& state) {
  std::mt19937_64 rng(6);
  std::vector<int> cls(64 * 64);
  for (auto& c : cls) c = static_cast<int>(rng() % 3);
  // one_hot gives C x H x W; the loss wants a batch axis
  const Tensor target = Tensor::from_values({1, 3, 64, 64}, one_hot(cls, 64, 64).to_vector());
  const Tensor probs = ops::softmax_channels(noise({1, 3, 64, 64}, 7));
  for (auto _ : state) benchmark::DoNotOptimize(compound_loss(probs, target));
}
BENCHMARK(BM_CompoundLoss);

void BM_Confusion(benchmark::State& state) {
  const Tensor pred = noise({3, 256, 256}, 8), truth = noise({3, 256, 256}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(confusion(pred, truth));
}
BENCHMARK(BM_Confusion);

}  // namespace

BENCHMARK_MAIN();
