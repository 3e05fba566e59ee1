#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "avnet/archive.hpp"
#include "avnet/ops.hpp"
#include "avnet/parameter_store.hpp"

namespace avnet {

using ops::Mode;

struct AvNetConfig {
  std::array<int, 4> dense_block_layers{6, 12, 24, 16};
  int growth_rate = 32;
  int stem_channels = 64;
  double transition_compression = 0.5;
  // Deepest decoder block first.
  std::array<int, 4> decoder_channels{256, 128, 64, 32};
  // Width of the 1x1 bottleneck inside a convolution block, in units of
  // growth_rate.
  int bottleneck_factor = 4;
  int num_classes = 3;
  int input_channels = 2;
  int input_size = 256;

  // DenseNet-121-shaped encoder at 256 x 256.
  static AvNetConfig canonical();
  // Small model used for CPU-scale experiments (64 x 64 inputs).
  static AvNetConfig desk();
  // Smallest useful model, used for end-to-end gradient checks.
  static AvNetConfig tiny();

  // Throws ConfigError listing every violated constraint.
  void validate() const;

  bool operator==(const AvNetConfig&) const = default;
};

// Conv (no bias) -> BatchNorm -> ReLU.
struct ConvBnRelu {
  Tensor weight;
  Tensor gamma, beta, running_mean, running_var;
  int stride = 1;
  int padding = 0;

  std::int64_t in_channels() const { return weight.dim(1); }
  std::int64_t out_channels() const { return weight.dim(0); }
};

Tensor conv_bn_relu_forward(ConvBnRelu& unit, const Tensor& x, Mode mode);

// concat(x, f(x)) with f = 1x1 ConvBnRelu -> 3x3 ConvBnRelu.
struct ConvBlock {
  ConvBnRelu bottleneck;
  ConvBnRelu conv;
};

struct DenseBlock {
  std::vector<ConvBlock> layers;
};

// Output B is the compressed 1x1 conv result at full resolution, output A is
// its 2x2 average pool.
struct TransitionBlock {
  ConvBnRelu conv;
};

// ReLU(BN(Conv3x3(concat(upsample2x(inA), inB)))).
struct DecoderBlock {
  ConvBnRelu conv;
};

Tensor conv_block_forward(ConvBlock& block, const Tensor& x, Mode mode);
Tensor dense_block_forward(DenseBlock& block, const Tensor& x, Mode mode);
std::pair<Tensor, Tensor> transition_forward(TransitionBlock& block, const Tensor& x, Mode mode);
Tensor decoder_block_forward(DecoderBlock& block, const Tensor& in_a, const Tensor& in_b,
                             Mode mode);

// Creates and registers a He-normal initialized unit under prefix.
ConvBnRelu make_conv_bn_relu(ParameterStore& store, const std::string& prefix, int in_channels,
                             int out_channels, int kernel, int stride, int padding,
                             std::mt19937_64& rng, DType dtype);
ConvBlock make_conv_block(ParameterStore& store, const std::string& prefix, int in_channels,
                          int growth_rate, int bottleneck_factor, std::mt19937_64& rng,
                          DType dtype);
DenseBlock make_dense_block(ParameterStore& store, const std::string& prefix, int in_channels,
                            int layers, int growth_rate, int bottleneck_factor,
                            std::mt19937_64& rng, DType dtype);

class AvNetModel {
 public:
  // Copies would alias parameter storage.
  AvNetModel(const AvNetModel&) = delete;
  AvNetModel& operator=(const AvNetModel&) = delete;
  AvNetModel(AvNetModel&&) = default;
  AvNetModel& operator=(AvNetModel&&) = default;

  const AvNetConfig& config() const { return config_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  DType dtype() const { return dtype_; }

  // N x 2 x S x S -> N x 3 x S x S per-pixel class probabilities. Train mode
  // updates batch-norm running statistics.
  Tensor forward(const Tensor& batch, Mode mode);

  // Number of convolution layers in the graph.
  int conv_layer_count() const;

 private:
  AvNetModel() = default;
  friend AvNetModel build_avnet(const AvNetConfig& config, std::uint64_t seed, DType dtype);

  AvNetConfig config_;
  DType dtype_ = DType::float32;
  ParameterStore store_;
  ConvBnRelu stem_;
  std::array<DenseBlock, 4> dense_;
  std::array<TransitionBlock, 4> transitions_;
  std::array<DecoderBlock, 4> decoders_;  // index i pairs with transitions_[i]
  ConvBnRelu head_;
  Tensor classifier_weight_;
  Tensor classifier_bias_;
};

AvNetModel build_avnet(const AvNetConfig& config, std::uint64_t seed, DType dtype = DType::float32);

std::int64_t count_parameters(const AvNetModel& model);

struct LoadReport {
  std::vector<std::string> loaded;
  std::vector<std::string> skipped;
};

// Copies every archive tensor whose name and shape match a model tensor.
// Mismatches are skipped, or raise ParameterError when strict.
LoadReport load_pretrained(AvNetModel& model, const WeightArchive& archive, bool strict);

}  // namespace avnet
