#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "airad/error.hpp"

namespace airad {

/// Channel-major CHW f32 tensor.
struct Tensor {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::size_t c, std::size_t h, std::size_t w, float fill = 0.0f)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane_size() const noexcept { return height * width; }
  float* plane(std::size_t c) noexcept { return data.data() + c * plane_size(); }
  const float* plane(std::size_t c) const noexcept { return data.data() + c * plane_size(); }
  float& at(std::size_t c, std::size_t y, std::size_t x) noexcept { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const noexcept { return data[(c * height + y) * width + x]; }
};

struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t padding = 1;
  std::size_t stride = 1;
  bool has_bias = true;

  std::size_t weight_count() const noexcept { return out_channels * in_channels * kernel * kernel; }
  std::size_t param_count() const noexcept { return weight_count() + (has_bias ? out_channels : 0); }
  std::size_t output_extent(std::size_t n) const noexcept { return (n + 2 * padding - kernel) / stride + 1; }
};

/// Cross-correlation with zero padding. Weights are [out][in][k][k] row-major.
/// Each output accumulates over (in, ky, kx) in ascending order, then adds bias.
Tensor conv2d(const Tensor& input, const ConvSpec& spec, std::span<const float> weights,
              std::span<const float> bias, bool fuse_relu = false);

/// 2x2 stride-2 transposed convolution. Weights are [in][out][2][2].
Tensor conv_transpose2x2(const Tensor& input, std::size_t out_channels, std::span<const float> weights,
                         std::span<const float> bias);

Tensor max_pool2x2(const Tensor& input);
/// Half-pixel bilinear x2 upsampling.
Tensor upsample_bilinear2x(const Tensor& input);
Tensor concat_channels(const Tensor& a, const Tensor& b);
void relu_inplace(Tensor& t) noexcept;

}  // namespace airad
