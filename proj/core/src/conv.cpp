#include <algorithm>
#include <cstring>
#include <string>

#include "airad/tensor.hpp"
#include "parallel.hpp"

namespace airad {
namespace {

constexpr std::size_t kOutBlock = 8;

void check_spans(const ConvSpec& spec, std::span<const float> weights, std::span<const float> bias) {
  if (weights.size() != spec.weight_count())
    throw Error(ErrorCode::ShapeMismatch, "conv weights: expected " + std::to_string(spec.weight_count()) +
                                              " values, got " + std::to_string(weights.size()));
  if (spec.has_bias && bias.size() != spec.out_channels)
    throw Error(ErrorCode::ShapeMismatch, "conv bias length differs from out_channels");
}

}  // namespace

Tensor conv2d(const Tensor& input, const ConvSpec& spec, std::span<const float> weights,
              std::span<const float> bias, bool fuse_relu) {
  if (input.channels != spec.in_channels)
    throw Error(ErrorCode::ShapeMismatch, "conv input has " + std::to_string(input.channels) +
                                              " channels, spec expects " + std::to_string(spec.in_channels));
  if (spec.kernel == 0 || spec.stride == 0) throw Error(ErrorCode::InvalidArgument, "kernel and stride must be positive");
  if (input.height + 2 * spec.padding < spec.kernel || input.width + 2 * spec.padding < spec.kernel)
    throw Error(ErrorCode::ShapeMismatch, "input smaller than kernel");
  check_spans(spec, weights, bias);

  const std::size_t H = input.height, W = input.width;
  const std::size_t OH = spec.output_extent(H), OW = spec.output_extent(W);
  const std::size_t K = spec.kernel, C = spec.in_channels, O = spec.out_channels;
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  const std::size_t stride = spec.stride;
  Tensor out(O, OH, OW);

  // Valid output-x range for each kernel column.
  std::vector<std::size_t> x_lo(K), x_hi(K);
  for (std::size_t kx = 0; kx < K; ++kx) {
    std::size_t lo = 0, hi = 0;
    bool seen = false;
    for (std::size_t x = 0; x < OW; ++x) {
      const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * stride + kx) - pad;
      if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(W)) {
        if (!seen) lo = x;
        seen = true;
        hi = x + 1;
      }
    }
    x_lo[kx] = lo;
    x_hi[kx] = seen ? hi : lo;
  }

  const std::size_t blocks = (O + kOutBlock - 1) / kOutBlock;
  detail::parallel_for(blocks, [&](std::size_t blk) {
    const std::size_t o0 = blk * kOutBlock;
    const std::size_t nb = std::min(kOutBlock, O - o0);
    std::vector<float> acc(kOutBlock * OW);
    for (std::size_t y = 0; y < OH; ++y) {
      std::fill(acc.begin(), acc.end(), 0.0f);
      for (std::size_t c = 0; c < C; ++c) {
        const float* plane = input.plane(c);
        for (std::size_t ky = 0; ky < K; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
          const float* row = plane + static_cast<std::size_t>(iy) * W;
          for (std::size_t kx = 0; kx < K; ++kx) {
            const std::size_t lo = x_lo[kx], hi = x_hi[kx];
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kx) - pad;
            for (std::size_t b = 0; b < nb; ++b) {
              const float w = weights[(((o0 + b) * C + c) * K + ky) * K + kx];
              float* a = acc.data() + b * OW;
              if (stride == 1) {
                const float* src = row + shift;
                for (std::size_t x = lo; x < hi; ++x) a[x] += w * src[x];
              } else {
                for (std::size_t x = lo; x < hi; ++x)
                  a[x] += w * row[static_cast<std::ptrdiff_t>(x * stride) + shift];
              }
            }
          }
        }
      }
      for (std::size_t b = 0; b < nb; ++b) {
        const float bv = spec.has_bias ? bias[o0 + b] : 0.0f;
        float* dst = out.plane(o0 + b) + y * OW;
        const float* a = acc.data() + b * OW;
        if (fuse_relu) {
          for (std::size_t x = 0; x < OW; ++x) dst[x] = std::max(0.0f, a[x] + bv);
        } else {
          for (std::size_t x = 0; x < OW; ++x) dst[x] = a[x] + bv;
        }
      }
    }
  });
  return out;
}

Tensor conv_transpose2x2(const Tensor& input, std::size_t out_channels, std::span<const float> weights,
                         std::span<const float> bias) {
  const std::size_t C = input.channels, H = input.height, W = input.width;
  if (weights.size() != C * out_channels * 4)
    throw Error(ErrorCode::ShapeMismatch, "transposed conv weights have the wrong size");
  if (bias.size() != out_channels) throw Error(ErrorCode::ShapeMismatch, "transposed conv bias has the wrong size");
  Tensor out(out_channels, 2 * H, 2 * W);
  detail::parallel_for(out_channels, [&](std::size_t o) {
    // Each output pixel receives exactly one tap per input channel.
    std::vector<float> acc(4 * H * W, 0.0f);
    for (std::size_t c = 0; c < C; ++c) {
      const float* src = input.plane(c);
      for (std::size_t d = 0; d < 4; ++d) {
        const float w = weights[(c * out_channels + o) * 4 + d];
        float* a = acc.data() + d * H * W;
        for (std::size_t i = 0; i < H * W; ++i) a[i] += w * src[i];
      }
    }
    float* dst = out.plane(o);
    const float bv = bias[o];
    for (std::size_t d = 0; d < 4; ++d) {
      const std::size_t dy = d / 2, dx = d % 2;
      const float* a = acc.data() + d * H * W;
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) dst[(2 * y + dy) * (2 * W) + 2 * x + dx] = a[y * W + x] + bv;
    }
  });
  return out;
}

Tensor max_pool2x2(const Tensor& input) {
  if (input.height % 2 || input.width % 2) throw Error(ErrorCode::ShapeMismatch, "max pool needs even spatial dims");
  const std::size_t OH = input.height / 2, OW = input.width / 2;
  Tensor out(input.channels, OH, OW);
  for (std::size_t c = 0; c < input.channels; ++c) {
    const float* src = input.plane(c);
    float* dst = out.plane(c);
    for (std::size_t y = 0; y < OH; ++y) {
      const float* r0 = src + 2 * y * input.width;
      const float* r1 = r0 + input.width;
      for (std::size_t x = 0; x < OW; ++x)
        dst[y * OW + x] = std::max(std::max(r0[2 * x], r0[2 * x + 1]), std::max(r1[2 * x], r1[2 * x + 1]));
    }
  }
  return out;
}

Tensor upsample_bilinear2x(const Tensor& input) {
  const std::size_t H = input.height, W = input.width;
  Tensor out(input.channels, 2 * H, 2 * W);
  auto tap = [](std::size_t o, std::size_t n, std::size_t& i0, std::size_t& i1, float& t) {
    const double s = std::clamp((static_cast<double>(o) + 0.5) / 2.0 - 0.5, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(s);
    i1 = std::min(i0 + 1, n - 1);
    t = static_cast<float>(s - static_cast<double>(i0));
  };
  for (std::size_t c = 0; c < input.channels; ++c) {
    const float* src = input.plane(c);
    float* dst = out.plane(c);
    for (std::size_t y = 0; y < 2 * H; ++y) {
      std::size_t y0, y1;
      float ty;
      tap(y, H, y0, y1, ty);
      for (std::size_t x = 0; x < 2 * W; ++x) {
        std::size_t x0, x1;
        float tx;
        tap(x, W, x0, x1, tx);
        const float a = src[y0 * W + x0] + tx * (src[y0 * W + x1] - src[y0 * W + x0]);
        const float b = src[y1 * W + x0] + tx * (src[y1 * W + x1] - src[y1 * W + x0]);
        dst[y * 2 * W + x] = a + ty * (b - a);
      }
    }
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.height != b.height || a.width != b.width) throw Error(ErrorCode::ShapeMismatch, "concat spatial dims differ");
  Tensor out(a.channels + b.channels, a.height, a.width);
  std::memcpy(out.data.data(), a.data.data(), a.data.size() * sizeof(float));
  std::memcpy(out.data.data() + a.data.size(), b.data.data(), b.data.size() * sizeof(float));
  return out;
}

void relu_inplace(Tensor& t) noexcept {
  for (float& v : t.data) v = std::max(0.0f, v);
}

}  // namespace airad
