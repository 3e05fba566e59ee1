#include "avnet/nn.hpp"

#include <cmath>
#include <sstream>

namespace avnet {

AvNetConfig AvNetConfig::canonical() { return AvNetConfig{}; }

AvNetConfig AvNetConfig::desk() {
  AvNetConfig c;
  c.dense_block_layers = {2, 2, 2, 2};
  c.growth_rate = 8;
  c.stem_channels = 16;
  c.decoder_channels = {64, 32, 16, 16};
  c.input_size = 64;
  return c;
}

AvNetConfig AvNetConfig::tiny() {
  AvNetConfig c;
  c.dense_block_layers = {1, 1, 1, 1};
  c.growth_rate = 2;
  c.stem_channels = 4;
  c.decoder_channels = {8, 8, 4, 4};
  c.input_size = 32;
  return c;
}

void AvNetConfig::validate() const {
  std::vector<std::string> problems;
  for (int layers : dense_block_layers) {
    if (layers < 1) problems.emplace_back("dense_block_layers entries must be >= 1");
  }
  if (growth_rate < 1) problems.emplace_back("growth_rate must be >= 1");
  if (stem_channels < 1) problems.emplace_back("stem_channels must be >= 1");
  if (!(transition_compression > 0.0 && transition_compression <= 1.0)) {
    problems.emplace_back("transition_compression must lie in (0, 1]");
  }
  for (int ch : decoder_channels) {
    if (ch < 1) problems.emplace_back("decoder_channels entries must be >= 1");
  }
  if (bottleneck_factor < 1) problems.emplace_back("bottleneck_factor must be >= 1");
  if (num_classes != 3) problems.emplace_back("num_classes must be 3 (artery, background, vein)");
  if (input_channels != 2) problems.emplace_back("input_channels must be 2 (OCT, OCTA)");
  if (input_size < 32 || input_size % 32 != 0) {
    problems.emplace_back("input_size must be a positive multiple of 32");
  }
  if (problems.empty()) return;
  std::ostringstream os;
  os << "invalid AV-Net config:";
  for (const auto& p : problems) os << "\n  - " << p;
  throw ConfigError(os.str());
}

namespace {

Tensor he_normal(const Shape& shape, std::int64_t fan_in, std::mt19937_64& rng, DType dtype) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t = Tensor::zeros(shape, dtype);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, dist(rng));
  return t;
}

int compressed(std::int64_t channels, double compression) {
  return static_cast<int>(std::ceil(compression * static_cast<double>(channels) - 1e-9));
}

}  // namespace

ConvBnRelu make_conv_bn_relu(ParameterStore& store, const std::string& prefix, int in_channels,
                             int out_channels, int kernel, int stride, int padding,
                             std::mt19937_64& rng, DType dtype) {
  ConvBnRelu u;
  u.stride = stride;
  u.padding = padding;
  u.weight =
      store.add(prefix + ".conv.weight",
                he_normal({out_channels, in_channels, kernel, kernel},
                          static_cast<std::int64_t>(in_channels) * kernel * kernel, rng, dtype),
                true);
  u.gamma = store.add(prefix + ".bn.gamma", Tensor::full({out_channels}, 1.0, dtype), true);
  u.beta = store.add(prefix + ".bn.beta", Tensor::zeros({out_channels}, dtype), true);
  u.running_mean =
      store.add(prefix + ".bn.running_mean", Tensor::zeros({out_channels}, dtype), false);
  u.running_var =
      store.add(prefix + ".bn.running_var", Tensor::full({out_channels}, 1.0, dtype), false);
  return u;
}

ConvBlock make_conv_block(ParameterStore& store, const std::string& prefix, int in_channels,
                          int growth_rate, int bottleneck_factor, std::mt19937_64& rng,
                          DType dtype) {
  const int width = bottleneck_factor * growth_rate;
  return {make_conv_bn_relu(store, prefix + ".bottleneck", in_channels, width, 1, 1, 0, rng, dtype),
          make_conv_bn_relu(store, prefix + ".expand", width, growth_rate, 3, 1, 1, rng, dtype)};
}

DenseBlock make_dense_block(ParameterStore& store, const std::string& prefix, int in_channels,
                            int layers, int growth_rate, int bottleneck_factor,
                            std::mt19937_64& rng, DType dtype) {
  DenseBlock block;
  for (int i = 0; i < layers; ++i) {
    block.layers.push_back(make_conv_block(store, prefix + ".layer" + std::to_string(i),
                                           in_channels + i * growth_rate, growth_rate,
                                           bottleneck_factor, rng, dtype));
  }
  return block;
}

Tensor conv_bn_relu_forward(ConvBnRelu& unit, const Tensor& x, Mode mode) {
  Tensor y = ops::conv2d(x, unit.weight, Tensor(), unit.stride, unit.padding);
  y = ops::batch_norm2d(y, unit.gamma, unit.beta, unit.running_mean, unit.running_var, mode);
  return ops::relu(y);
}

Tensor conv_block_forward(ConvBlock& block, const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != block.bottleneck.in_channels()) {
    throw ShapeError("conv block expects " + std::to_string(block.bottleneck.in_channels()) +
                     " input channels, got " + x.shape().str());
  }
  Tensor branch = conv_bn_relu_forward(block.bottleneck, x, mode);
  branch = conv_bn_relu_forward(block.conv, branch, mode);
  return ops::concat_channels(x, branch);
}

Tensor dense_block_forward(DenseBlock& block, const Tensor& x, Mode mode) {
  if (block.layers.empty()) throw ShapeError("dense block has no layers");
  Tensor h = x;
  for (auto& layer : block.layers) h = conv_block_forward(layer, h, mode);
  return h;
}

std::pair<Tensor, Tensor> transition_forward(TransitionBlock& block, const Tensor& x, Mode mode) {
  if (x.rank() != 4 || x.dim(1) != block.conv.in_channels()) {
    throw ShapeError("transition block expects " + std::to_string(block.conv.in_channels()) +
                     " input channels, got " + x.shape().str());
  }
  Tensor out_b = conv_bn_relu_forward(block.conv, x, mode);
  Tensor out_a = ops::avg_pool2d(out_b);
  return {out_a, out_b};
}

Tensor decoder_block_forward(DecoderBlock& block, const Tensor& in_a, const Tensor& in_b,
                             Mode mode) {
  if (in_a.rank() != 4 || in_b.rank() != 4 || 2 * in_a.dim(2) != in_b.dim(2) ||
      2 * in_a.dim(3) != in_b.dim(3) || in_a.dim(0) != in_b.dim(0)) {
    throw ShapeError("decoder block: upsampled input A " + in_a.shape().str() +
                     " does not spatially match input B " + in_b.shape().str());
  }
  Tensor y = ops::concat_channels(ops::upsample_nearest2x(in_a), in_b);
  return conv_bn_relu_forward(block.conv, y, mode);
}

AvNetModel build_avnet(const AvNetConfig& config, std::uint64_t seed, DType dtype) {
  config.validate();
  AvNetModel m;
  m.config_ = config;
  m.dtype_ = dtype;
  std::mt19937_64 rng(seed);
  ParameterStore& store = m.store_;

  m.stem_ = make_conv_bn_relu(store, "stem", config.input_channels, config.stem_channels, 7, 2, 3,
                              rng, dtype);
  int channels = config.stem_channels;
  std::array<int, 4> skip_channels{};
  for (int i = 0; i < 4; ++i) {
    const std::string n = std::to_string(i + 1);
    m.dense_[i] =
        make_dense_block(store, "encoder.dense" + n, channels, config.dense_block_layers[i],
                         config.growth_rate, config.bottleneck_factor, rng, dtype);
    channels += config.dense_block_layers[i] * config.growth_rate;
    const int out = compressed(channels, config.transition_compression);
    m.transitions_[i].conv =
        make_conv_bn_relu(store, "encoder.transition" + n, channels, out, 1, 1, 0, rng, dtype);
    skip_channels[i] = out;
    channels = out;
  }
  for (int i = 3; i >= 0; --i) {
    const int out = config.decoder_channels[3 - i];
    m.decoders_[i].conv = make_conv_bn_relu(store, "decoder.block" + std::to_string(i + 1),
                                            channels + skip_channels[i], out, 3, 1, 1, rng, dtype);
    channels = out;
  }
  m.head_ = make_conv_bn_relu(store, "head", channels, channels, 3, 1, 1, rng, dtype);
  m.classifier_weight_ =
      store.add("classifier.weight",
                he_normal({config.num_classes, channels, 1, 1}, channels, rng, dtype), true);
  m.classifier_bias_ =
      store.add("classifier.bias", Tensor::zeros({config.num_classes}, dtype), true);
  return m;
}

Tensor AvNetModel::forward(const Tensor& batch, Mode mode) {
  const std::int64_t S = config_.input_size;
  if (batch.rank() != 4 || batch.dim(1) != config_.input_channels || batch.dim(2) != S ||
      batch.dim(3) != S) {
    throw ShapeError("AV-Net expects N x " + std::to_string(config_.input_channels) + " x " +
                     std::to_string(S) + " x " + std::to_string(S) + " input, got " +
                     batch.shape().str());
  }
  if (batch.dtype() != dtype_) {
    throw ShapeError("AV-Net built for " + to_string(dtype_) + " but input is " +
                     to_string(batch.dtype()));
  }
  Tensor h = conv_bn_relu_forward(stem_, batch, mode);
  std::array<Tensor, 4> skips;
  for (int i = 0; i < 4; ++i) {
    h = dense_block_forward(dense_[i], h, mode);
    auto [out_a, out_b] = transition_forward(transitions_[i], h, mode);
    skips[i] = out_b;
    h = out_a;
  }
  for (int i = 3; i >= 0; --i) h = decoder_block_forward(decoders_[i], h, skips[i], mode);
  h = conv_bn_relu_forward(head_, ops::upsample_nearest2x(h), mode);
  Tensor logits = ops::conv2d(h, classifier_weight_, classifier_bias_, 1, 0);
  return ops::softmax_channels(logits);
}

int AvNetModel::conv_layer_count() const {
  int n = 1;  // stem
  for (const auto& block : dense_) n += 2 * static_cast<int>(block.layers.size());
  n += 4;  // transitions
  n += 4;  // decoder blocks
  n += 2;  // head + classifier
  return n;
}

std::int64_t count_parameters(const AvNetModel& model) {
  return model.parameters().trainable_count();
}

LoadReport load_pretrained(AvNetModel& model, const WeightArchive& archive, bool strict) {
  ParameterStore& store = model.parameters();
  auto mismatch = [&](const WeightArchive::Item& item) -> std::string {
    if (!store.contains(item.name)) return "no parameter named '" + item.name + "' in model";
    const Shape& have = store.get(item.name).shape();
    if (have != item.values.shape()) {
      return "shape mismatch for '" + item.name + "': archive " + item.values.shape().str() +
             ", model " + have.str();
    }
    return {};
  };
  // Strict loads fail before touching any tensor.
  if (strict) {
    for (const auto& item : archive.tensors) {
      if (auto reason = mismatch(item); !reason.empty()) {
        throw ParameterError("strict load failed: " + reason);
      }
    }
  }
  LoadReport report;
  for (const auto& item : archive.tensors) {
    if (!mismatch(item).empty()) {
      report.skipped.push_back(item.name);
      continue;
    }
    store.get(item.name).copy_from(item.values);
    report.loaded.push_back(item.name);
  }
  return report;
}

}  // namespace avnet
