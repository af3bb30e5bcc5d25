#include <algorithm>
#include <cmath>

#include "airad/preprocess.hpp"

namespace airad {
namespace {

struct AxisTiling {
  std::size_t kernel = 1;
  std::size_t tiles = 1;
  // Per coordinate: lower tile, upper tile and weight of the upper tile.
  std::vector<std::size_t> lo, hi;
  std::vector<float> w;
};

AxisTiling tile_axis(std::size_t n, std::size_t kernel) {
  AxisTiling t;
  t.kernel = kernel == 0 ? std::max<std::size_t>(1, (n + 7) / 8) : std::min(kernel, n);
  t.tiles = (n + t.kernel - 1) / t.kernel;
  std::vector<double> centre(t.tiles);
  for (std::size_t i = 0; i < t.tiles; ++i) {
    const std::size_t begin = i * t.kernel;
    const std::size_t end = std::min(n, begin + t.kernel);
    centre[i] = 0.5 * static_cast<double>(begin + end) - 0.5;
  }
  t.lo.resize(n);
  t.hi.resize(n);
  t.w.resize(n);
  for (std::size_t x = 0; x < n; ++x) {
    const double p = static_cast<double>(x);
    if (p <= centre.front()) {
      t.lo[x] = t.hi[x] = 0;
      t.w[x] = 0.0f;
    } else if (p >= centre.back()) {
      t.lo[x] = t.hi[x] = t.tiles - 1;
      t.w[x] = 0.0f;
    } else {
      std::size_t i = static_cast<std::size_t>(std::upper_bound(centre.begin(), centre.end(), p) - centre.begin()) - 1;
      t.lo[x] = i;
      t.hi[x] = i + 1;
      t.w[x] = static_cast<float>((p - centre[i]) / (centre[i + 1] - centre[i]));
    }
  }
  return t;
}

}  // namespace

Volume clahe3d(const Volume& v, const PreprocessConfig& cfg) {
  if (v.voxels.empty()) return v;
  const std::size_t bins = cfg.clahe_bins;
  const AxisTiling tx = tile_axis(v.dims.nx, cfg.clahe_kernel[0]);
  const AxisTiling ty = tile_axis(v.dims.ny, cfg.clahe_kernel[1]);
  const AxisTiling tz = tile_axis(v.dims.nz, cfg.clahe_kernel[2]);

  std::vector<std::uint16_t> bin_of(v.voxels.size());
  for (std::size_t i = 0; i < v.voxels.size(); ++i) {
    const float x = std::clamp(v.voxels[i], 0.0f, 1.0f);
    bin_of[i] = static_cast<std::uint16_t>(std::min<std::size_t>(bins - 1, static_cast<std::size_t>(x * static_cast<float>(bins))));
  }

  const std::size_t n_tiles = tx.tiles * ty.tiles * tz.tiles;
  std::vector<float> maps(n_tiles * bins);
  std::vector<double> hist(bins);
  for (std::size_t kz = 0; kz < tz.tiles; ++kz)
    for (std::size_t ky = 0; ky < ty.tiles; ++ky)
      for (std::size_t kx = 0; kx < tx.tiles; ++kx) {
        std::fill(hist.begin(), hist.end(), 0.0);
        const std::size_t x1 = std::min(v.dims.nx, (kx + 1) * tx.kernel);
        const std::size_t y1 = std::min(v.dims.ny, (ky + 1) * ty.kernel);
        const std::size_t z1 = std::min(v.dims.nz, (kz + 1) * tz.kernel);
        std::size_t count = 0;
        for (std::size_t z = kz * tz.kernel; z < z1; ++z)
          for (std::size_t y = ky * ty.kernel; y < y1; ++y)
            for (std::size_t x = kx * tx.kernel; x < x1; ++x) {
              hist[bin_of[v.index(x, y, z)]] += 1.0;
              ++count;
            }
        // Clip at clip_limit * window volume and spread the excess evenly.
        const double limit = cfg.clahe_clip_limit * static_cast<double>(count);
        double excess = 0.0;
        for (double& h : hist) {
          if (h > limit) {
            excess += h - limit;
            h = limit;
          }
        }
        const double share = excess / static_cast<double>(bins);
        float* map = maps.data() + ((kz * ty.tiles + ky) * tx.tiles + kx) * bins;
        double cum = 0.0;
        for (std::size_t b = 0; b < bins; ++b) {
          cum += hist[b] + share;
          map[b] = static_cast<float>(std::min(1.0, cum / static_cast<double>(count)));
        }
      }

  Volume out = v;
  auto tile_map = [&](std::size_t kx, std::size_t ky, std::size_t kz) {
    return maps.data() + ((kz * ty.tiles + ky) * tx.tiles + kx) * bins;
  };
  for (std::size_t z = 0; z < v.dims.nz; ++z) {
    const float wz = tz.w[z];
    for (std::size_t y = 0; y < v.dims.ny; ++y) {
      const float wy = ty.w[y];
      for (std::size_t x = 0; x < v.dims.nx; ++x) {
        const float wx = tx.w[x];
        const std::size_t i = v.index(x, y, z);
        const std::size_t b = bin_of[i];
        auto corner = [&](std::size_t ix, std::size_t iy, std::size_t iz) { return tile_map(ix, iy, iz)[b]; };
        const float c00 = corner(tx.lo[x], ty.lo[y], tz.lo[z]) + wx * (corner(tx.hi[x], ty.lo[y], tz.lo[z]) - corner(tx.lo[x], ty.lo[y], tz.lo[z]));
        const float c10 = corner(tx.lo[x], ty.hi[y], tz.lo[z]) + wx * (corner(tx.hi[x], ty.hi[y], tz.lo[z]) - corner(tx.lo[x], ty.hi[y], tz.lo[z]));
        const float c01 = corner(tx.lo[x], ty.lo[y], tz.hi[z]) + wx * (corner(tx.hi[x], ty.lo[y], tz.hi[z]) - corner(tx.lo[x], ty.lo[y], tz.hi[z]));
        const float c11 = corner(tx.lo[x], ty.hi[y], tz.hi[z]) + wx * (corner(tx.hi[x], ty.hi[y], tz.hi[z]) - corner(tx.lo[x], ty.hi[y], tz.hi[z]));
        const float c0 = c00 + wy * (c10 - c00);
        const float c1 = c01 + wy * (c11 - c01);
        out.voxels[i] = std::clamp(c0 + wz * (c1 - c0), 0.0f, 1.0f);
      }
    }
  }
  return out;
}

}  // namespace airad
