#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "airad/image.hpp"
#include "airad/preprocess.hpp"
#include "airad/tensor.hpp"

namespace airad {

enum class UpsampleMode { TransposedConv, BilinearThenConv };

struct UNetConfig {
  std::size_t levels = 5;
  std::vector<std::size_t> channels_per_level{64, 128, 256, 512, 512};
  std::size_t in_channels = 5;
  std::size_t out_channels = 1;
  UpsampleMode upsample_mode = UpsampleMode::TransposedConv;

  void validate() const;
  /// 2.5D half-width implied by in_channels = 2k + 1.
  std::size_t context_k() const noexcept { return (in_channels - 1) / 2; }
  std::string to_json() const;
  static UNetConfig from_json(const std::string& text);
  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

enum class LayerKind { Conv3x3, UpConv2x2, Conv1x1 };

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Conv3x3;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;

  std::vector<std::size_t> weight_shape() const;
  std::size_t weight_count() const;
  std::size_t param_count() const { return weight_count() + out_channels; }
};

/// Every parameterised layer of the graph, in execution order.
std::vector<LayerSpec> unet_layers(const UNetConfig& cfg);

struct ParamCount {
  std::vector<std::pair<std::string, std::size_t>> per_layer;
  std::size_t total = 0;

  std::size_t of(const std::string& layer) const;
};

ParamCount param_count(const UNetConfig& cfg);

struct NamedTensor {
  std::vector<std::size_t> shape;
  std::vector<float> values;
};

/// Immutable-after-load container of named weight tensors bound to a config.
/// On disk: "UNETW1\0", u64 little-endian manifest length, JSON manifest,
/// then the little-endian f32 blob.
class WeightStore {
 public:
  WeightStore() = default;
  WeightStore(UNetConfig cfg, std::map<std::string, NamedTensor> entries);

  /// He-normal weights, zero biases, deterministic in `seed`.
  static WeightStore random(const UNetConfig& cfg, std::uint64_t seed);
  static WeightStore constant(const UNetConfig& cfg, float weight, float bias);
  static WeightStore load(const std::filesystem::path& path);
  static bool has_magic(const std::filesystem::path& path);

  void save(const std::filesystem::path& path) const;
  /// MissingWeights / ShapeMismatch unless entries match the config exactly.
  void validate() const;

  const UNetConfig& config() const noexcept { return config_; }
  const std::string& config_hash() const noexcept { return hash_; }
  const std::map<std::string, NamedTensor>& entries() const noexcept { return entries_; }
  std::span<const float> get(const std::string& name) const;

 private:
  UNetConfig config_;
  std::map<std::string, NamedTensor> entries_;
  std::string hash_;
};

std::string config_hash(const UNetConfig& cfg);

struct ProbabilityMap {
  Image2 values;
  std::size_t target_index = 0;
};

Tensor stack_to_tensor(const SliceStack& stack);

/// Encoder/decoder forward pass ending in a sigmoid head. Outputs lie in the
/// open interval (0, 1): values that would round to 0 or 1 in f32 are clamped
/// to the nearest representable interior value.
ProbabilityMap forward(const SliceStack& stack, const WeightStore& weights);
/// As above, additionally requiring `cfg` to be the config the weights were built for.
ProbabilityMap forward(const SliceStack& stack, const UNetConfig& cfg, const WeightStore& weights);

using SliceProgress = std::function<void(std::size_t done, std::size_t total)>;

/// One binary slice per input slice; foreground where probability >= threshold.
LabelMask segment_slicewise(const Volume& v, const WeightStore& weights, float threshold = 0.5f,
                            const SliceProgress& progress = {});

}  // namespace airad
