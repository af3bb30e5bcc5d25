#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

namespace airad::testing {
namespace {

struct Map {
  std::size_t c = 0, h = 0, w = 0;
  std::vector<double> d;

  Map(std::size_t c_, std::size_t h_, std::size_t w_) : c(c_), h(h_), w(w_), d(c_ * h_ * w_, 0.0) {}
  double& at(std::size_t ch, std::size_t y, std::size_t x) { return d[(ch * h + y) * w + x]; }
  double at(std::size_t ch, std::size_t y, std::size_t x) const { return d[(ch * h + y) * w + x]; }
};

Map conv(const Map& in, std::span<const float> wt, std::span<const float> b, std::size_t out, std::size_t k, bool relu) {
  const long pad = static_cast<long>(k / 2);
  Map o(out, in.h, in.w);
  for (std::size_t oc = 0; oc < out; ++oc)
    for (std::size_t y = 0; y < in.h; ++y)
      for (std::size_t x = 0; x < in.w; ++x) {
        double s = b[oc];
        for (std::size_t ic = 0; ic < in.c; ++ic)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long sy = static_cast<long>(y + ky) - pad;
              const long sx = static_cast<long>(x + kx) - pad;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(in.h) || sx >= static_cast<long>(in.w)) continue;
              s += wt[((oc * in.c + ic) * k + ky) * k + kx] * in.at(ic, sy, sx);
            }
        o.at(oc, y, x) = relu ? std::max(0.0, s) : s;
      }
  return o;
}

Map pool(const Map& in) {
  Map o(in.c, in.h / 2, in.w / 2);
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t y = 0; y < o.h; ++y)
      for (std::size_t x = 0; x < o.w; ++x)
        o.at(c, y, x) = std::max({in.at(c, 2 * y, 2 * x), in.at(c, 2 * y, 2 * x + 1), in.at(c, 2 * y + 1, 2 * x),
                                  in.at(c, 2 * y + 1, 2 * x + 1)});
  return o;
}

Map up_transposed(const Map& in, std::span<const float> wt, std::span<const float> b, std::size_t out) {
  Map o(out, 2 * in.h, 2 * in.w);
  for (std::size_t oc = 0; oc < out; ++oc)
    for (std::size_t y = 0; y < o.h; ++y)
      for (std::size_t x = 0; x < o.w; ++x) {
        double s = b[oc];
        for (std::size_t ic = 0; ic < in.c; ++ic)
          s += wt[((ic * out + oc) * 2 + y % 2) * 2 + x % 2] * in.at(ic, y / 2, x / 2);
        o.at(oc, y, x) = s;
      }
  return o;
}

// Half-pixel centres: output sample o reads source coordinate (o + 0.5) / 2 - 0.5.
Map up_bilinear(const Map& in) {
  Map o(in.c, 2 * in.h, 2 * in.w);
  auto source = [](std::size_t i, std::size_t n) {
    double s = (static_cast<double>(i) + 0.5) / 2.0 - 0.5;
    return std::min(std::max(s, 0.0), static_cast<double>(n - 1));
  };
  for (std::size_t c = 0; c < in.c; ++c)
    for (std::size_t y = 0; y < o.h; ++y)
      for (std::size_t x = 0; x < o.w; ++x) {
        const double sy = source(y, in.h), sx = source(x, in.w);
        const std::size_t y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
        const std::size_t y1 = std::min(y0 + 1, in.h - 1), x1 = std::min(x0 + 1, in.w - 1);
        const double fy = sy - y0, fx = sx - x0;
        o.at(c, y, x) = (1 - fy) * (1 - fx) * in.at(c, y0, x0) + (1 - fy) * fx * in.at(c, y0, x1) +
                        fy * (1 - fx) * in.at(c, y1, x0) + fy * fx * in.at(c, y1, x1);
      }
  return o;
}

Map cat(const Map& a, const Map& b) {
  Map o(a.c + b.c, a.h, a.w);
  std::copy(a.d.begin(), a.d.end(), o.d.begin());
  std::copy(b.d.begin(), b.d.end(), o.d.begin() + static_cast<long>(a.d.size()));
  return o;
}

bool is_surface(const LabelMask& m, std::size_t x, std::size_t y, std::size_t z) {
  const long n[3] = {static_cast<long>(m.dims.nx), static_cast<long>(m.dims.ny), static_cast<long>(m.dims.nz)};
  const long p[3] = {static_cast<long>(x), static_cast<long>(y), static_cast<long>(z)};
  const long steps[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (const auto& s : steps) {
    const long q[3] = {p[0] + s[0], p[1] + s[1], p[2] + s[2]};
    if (q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= n[0] || q[1] >= n[1] || q[2] >= n[2]) return true;
    if (m.at(static_cast<std::size_t>(q[0]), static_cast<std::size_t>(q[1]), static_cast<std::size_t>(q[2])) == 0)
      return true;
  }
  return false;
}

double nearest(const Point3& p, const std::vector<Point3>& set) {
  double best = INFINITY;
  for (const Point3& q : set) {
    const double dx = p[0] - q[0], dy = p[1] - q[1], dz = p[2] - q[2];
    best = std::min(best, std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  return best;
}

std::size_t kernel_of(std::size_t n, std::size_t k) { return k == 0 ? (n + 7) / 8 : std::min(k, n); }

// Lower tile, upper tile and upper weight for coordinate p along one axis.
struct AxisWeight {
  std::size_t lo, hi;
  double w;
};

AxisWeight axis_weight(std::size_t p, std::size_t n, std::size_t kernel) {
  std::vector<double> centres;
  for (std::size_t b = 0; b < n; b += kernel) centres.push_back((static_cast<double>(b) + static_cast<double>(std::min(n, b + kernel)) - 1.0) / 2.0);
  const double x = static_cast<double>(p);
  if (x <= centres.front()) return {0, 0, 0.0};
  if (x >= centres.back()) return {centres.size() - 1, centres.size() - 1, 0.0};
  for (std::size_t i = 0; i + 1 < centres.size(); ++i)
    if (x >= centres[i] && x < centres[i + 1]) return {i, i + 1, (x - centres[i]) / (centres[i + 1] - centres[i])};
  return {0, 0, 0.0};
}

std::size_t bin_of(float v, std::size_t bins) {
  const double x = std::min(1.0, std::max(0.0, static_cast<double>(v)));
  return std::min(bins - 1, static_cast<std::size_t>(std::floor(x * static_cast<double>(bins))));
}

}  // namespace

std::vector<double> brute_conv2d(const Tensor& input, const ConvSpec& spec, std::span<const float> weights,
                                 std::span<const float> bias) {
  const std::size_t K = spec.kernel, P = spec.padding, S = spec.stride;
  const std::size_t oh = (input.height + 2 * P - K) / S + 1;
  const std::size_t ow = (input.width + 2 * P - K) / S + 1;
  std::vector<double> out(spec.out_channels * oh * ow, 0.0);
  for (std::size_t o = 0; o < spec.out_channels; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = spec.has_bias ? bias[o] : 0.0;
        for (std::size_t i = 0; i < spec.in_channels; ++i)
          for (std::size_t ky = 0; ky < K; ++ky)
            for (std::size_t kx = 0; kx < K; ++kx) {
              const long sy = static_cast<long>(y * S + ky) - static_cast<long>(P);
              const long sx = static_cast<long>(x * S + kx) - static_cast<long>(P);
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(input.height) || sx >= static_cast<long>(input.width))
                continue;
              s += static_cast<double>(weights[((o * spec.in_channels + i) * K + ky) * K + kx]) *
                   input.at(i, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            }
        out[(o * oh + y) * ow + x] = s;
      }
  return out;
}

std::vector<double> naive_unet_forward(const SliceStack& stack, const WeightStore& weights) {
  const UNetConfig& cfg = weights.config();
  const auto& ch = cfg.channels_per_level;
  Map x(stack.channels.size(), stack.height, stack.width);
  for (std::size_t c = 0; c < stack.channels.size(); ++c)
    for (std::size_t y = 0; y < stack.height; ++y)
      for (std::size_t i = 0; i < stack.width; ++i) x.at(c, y, i) = stack.channels[c].at(i, y);

  auto w = [&](const std::string& n) { return weights.get(n + ".weight"); };
  auto b = [&](const std::string& n) { return weights.get(n + ".bias"); };

  std::vector<Map> skips;
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    const std::string p = "enc" + std::to_string(l);
    x = conv(x, w(p + ".conv1"), b(p + ".conv1"), ch[l], 3, true);
    x = conv(x, w(p + ".conv2"), b(p + ".conv2"), ch[l], 3, true);
    if (l + 1 < cfg.levels) {
      skips.push_back(x);
      x = pool(x);
    }
  }
  for (std::size_t l = cfg.levels - 1; l-- > 0;) {
    const std::string p = "dec" + std::to_string(l);
    if (cfg.upsample_mode == UpsampleMode::TransposedConv) {
      x = up_transposed(x, w(p + ".up"), b(p + ".up"), ch[l]);
    } else {
      x = conv(up_bilinear(x), w(p + ".up"), b(p + ".up"), ch[l], 3, false);
    }
    x = cat(skips[l], x);
    x = conv(x, w(p + ".conv1"), b(p + ".conv1"), ch[l], 3, true);
    x = conv(x, w(p + ".conv2"), b(p + ".conv2"), ch[l], 3, true);
  }
  x = conv(x, w("head"), b("head"), 1, 1, false);
  std::vector<double> out(x.d.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x.d[i]));
  return out;
}

std::vector<Point3> brute_surface(const LabelMask& m) {
  std::vector<Point3> pts;
  for (std::size_t z = 0; z < m.dims.nz; ++z)
    for (std::size_t y = 0; y < m.dims.ny; ++y)
      for (std::size_t x = 0; x < m.dims.nx; ++x)
        if (m.at(x, y, z) != 0 && is_surface(m, x, y, z))
          pts.push_back({x * m.spacing[0], y * m.spacing[1], z * m.spacing[2]});
  std::sort(pts.begin(), pts.end());
  return pts;
}

BruteOverlap brute_overlap(const LabelMask& pred, const LabelMask& gt) {
  double p = 0, g = 0, both = 0, either = 0;
  for (std::size_t i = 0; i < pred.voxels.size(); ++i) {
    const bool a = pred.voxels[i] != 0, c = gt.voxels[i] != 0;
    p += a;
    g += c;
    both += a && c;
    either += a || c;
  }
  BruteOverlap r;
  if (p + g == 0) {
    r.dice = r.iou = 1.0;
    r.rvd = 0.0;
    return r;
  }
  r.dice = 2.0 * both / (p + g);
  r.iou = both / either;
  if (g == 0) {
    r.rvd_defined = false;
  } else {
    r.rvd = (p - g) / g;
  }
  return r;
}

SurfaceDistances brute_surface_distances(const LabelMask& pred, const LabelMask& gt) {
  const std::vector<Point3> sp = brute_surface(pred), sg = brute_surface(gt);
  std::vector<double> d;
  for (const Point3& p : sp) d.push_back(nearest(p, sg));
  for (const Point3& g : sg) d.push_back(nearest(g, sp));
  SurfaceDistances r;
  double sum = 0, sq = 0;
  for (double x : d) {
    sum += x;
    sq += x * x;
    r.hd = std::max(r.hd, x);
  }
  r.asd = sum / static_cast<double>(d.size());
  r.rmsd = std::sqrt(sq / static_cast<double>(d.size()));
  std::sort(d.begin(), d.end());
  const double rank = 0.95 * static_cast<double>(d.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, d.size() - 1);
  r.hd95 = d[lo] + (rank - static_cast<double>(lo)) * (d[hi] - d[lo]);
  return r;
}

Volume brute_clahe(const Volume& v, const PreprocessConfig& cfg) {
  const std::size_t n[3] = {v.dims.nx, v.dims.ny, v.dims.nz};
  std::size_t k[3];
  for (int a = 0; a < 3; ++a) k[a] = kernel_of(n[a], cfg.clahe_kernel[a]);
  const std::size_t bins = cfg.clahe_bins;

  // Mapping of one tile, built from scratch for every request.
  auto tile_value = [&](std::size_t tx, std::size_t ty, std::size_t tz, std::size_t bin) {
    std::vector<double> hist(bins, 0.0);
    double count = 0;
    for (std::size_t z = tz * k[2]; z < std::min(n[2], (tz + 1) * k[2]); ++z)
      for (std::size_t y = ty * k[1]; y < std::min(n[1], (ty + 1) * k[1]); ++y)
        for (std::size_t x = tx * k[0]; x < std::min(n[0], (tx + 1) * k[0]); ++x) {
          hist[bin_of(v.at(x, y, z), bins)] += 1;
          count += 1;
        }
    const double limit = cfg.clahe_clip_limit * count;
    double excess = 0;
    for (double& h : hist)
      if (h > limit) {
        excess += h - limit;
        h = limit;
      }
    double cum = 0;
    for (std::size_t i = 0; i <= bin; ++i) cum += hist[i] + excess / static_cast<double>(bins);
    return std::min(1.0, cum / count);
  };

  Volume out = v;
  for (std::size_t z = 0; z < n[2]; ++z)
    for (std::size_t y = 0; y < n[1]; ++y)
      for (std::size_t x = 0; x < n[0]; ++x) {
        const AxisWeight ax = axis_weight(x, n[0], k[0]), ay = axis_weight(y, n[1], k[1]), az = axis_weight(z, n[2], k[2]);
        const std::size_t bin = bin_of(v.at(x, y, z), bins);
        double s = 0;
        for (int cz = 0; cz < 2; ++cz)
          for (int cy = 0; cy < 2; ++cy)
            for (int cx = 0; cx < 2; ++cx) {
              const double wgt = (cx ? ax.w : 1 - ax.w) * (cy ? ay.w : 1 - ay.w) * (cz ? az.w : 1 - az.w);
              if (wgt == 0) continue;
              s += wgt * tile_value(cx ? ax.hi : ax.lo, cy ? ay.hi : ay.lo, cz ? az.hi : az.lo, bin);
            }
        out.at(x, y, z) = static_cast<float>(std::min(1.0, std::max(0.0, s)));
      }
  return out;
}

Volume global_histogram_equalization(const Volume& v, std::size_t bins) {
  std::vector<double> cdf(bins, 0.0);
  for (float x : v.voxels) cdf[bin_of(x, bins)] += 1;
  for (std::size_t i = 1; i < bins; ++i) cdf[i] += cdf[i - 1];
  Volume out = v;
  for (float& x : out.voxels) x = static_cast<float>(cdf[bin_of(x, bins)] / static_cast<double>(v.voxels.size()));
  return out;
}

TwoPassStats two_pass_stats(std::span<const Volume> volumes) {
  double sum = 0, n = 0;
  for (const Volume& v : volumes)
    for (float x : v.voxels) {
      sum += x;
      n += 1;
    }
  TwoPassStats s;
  s.mu = sum / n;
  double sq = 0;
  for (const Volume& v : volumes)
    for (float x : v.voxels) sq += (x - s.mu) * (x - s.mu);
  s.sigma = std::sqrt(sq / n);
  return s;
}

LabelMask brute_merge(const LabelMask& liver, const LabelMask& tumors, const LabelMask& vessels,
                      const Precedence& precedence) {
  LabelMask out(liver.dims);
  for (std::size_t i = 0; i < out.voxels.size(); ++i) {
    const std::map<Tissue, bool> claims{{Tissue::Liver, liver.voxels[i] != 0},
                                        {Tissue::Tumor, tumors.voxels[i] != 0},
                                        {Tissue::Vessel, vessels.voxels[i] != 0}};
    for (Tissue t : precedence)
      if (claims.at(t)) {
        out.voxels[i] = static_cast<std::uint8_t>(t);
        break;
      }
  }
  return out;
}

Volume brute_apply_mask(const Volume& v, const LabelMask& mask) {
  Volume out = v;
  for (std::size_t z = 0; z < v.dims.nz; ++z)
    for (std::size_t y = 0; y < v.dims.ny; ++y)
      for (std::size_t x = 0; x < v.dims.nx; ++x)
        out.at(x, y, z) = v.at(x, y, z) * static_cast<float>(mask.at(x, y, z) != 0 ? 1 : 0);
  return out;
}

double onecycle_formula(double max_lr, std::size_t total, double pct, double div, double final_div, std::size_t step) {
  const double peak = std::round(pct * static_cast<double>(total));
  const double s = static_cast<double>(step);
  const double initial = max_lr / div, final_lr = max_lr / final_div;
  if (s <= peak) return initial + (max_lr - initial) * (1.0 - std::cos(std::numbers::pi * s / peak)) / 2.0;
  return max_lr + (final_lr - max_lr) * (1.0 - std::cos(std::numbers::pi * (s - peak) / (static_cast<double>(total) - peak))) / 2.0;
}

}  // namespace airad::testing
