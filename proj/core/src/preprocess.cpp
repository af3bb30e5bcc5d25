#include "airad/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace airad {
namespace {

constexpr double kObliqueTolerance = 1e-4;

std::size_t scaled_extent(std::size_t n, double factor) {
  // Guard against 0.5 * 512 landing a hair above an integer.
  return static_cast<std::size_t>(std::ceil(static_cast<double>(n) * factor - 1e-9));
}

template <typename T>
Image3<T> reorient_impl(const Image3<T>& src, const Reorientation& r) {
  Image3<T> out;
  out.dims = r.target_dims();
  out.voxels.resize(src.voxels.size());
  out.source_id = src.source_id;
  out.preprocessed = src.preprocessed;

  const std::array<std::size_t, 3> n_old{src.dims.nx, src.dims.ny, src.dims.nz};
  const std::array<std::ptrdiff_t, 3> stride_old{1, static_cast<std::ptrdiff_t>(src.dims.nx),
                                                 static_cast<std::ptrdiff_t>(src.dims.nx * src.dims.ny)};
  std::ptrdiff_t base = 0;
  std::array<std::ptrdiff_t, 3> step{};
  std::array<double, 3> origin_index{0, 0, 0};
  for (int i = 0; i < 3; ++i) {
    const int j = r.source_axis[i];
    if (r.flip[i]) {
      base += static_cast<std::ptrdiff_t>(n_old[j] - 1) * stride_old[j];
      step[i] = -stride_old[j];
      origin_index[j] = static_cast<double>(n_old[j] - 1);
    } else {
      step[i] = stride_old[j];
    }
  }
  std::size_t o = 0;
  for (std::size_t z = 0; z < out.dims.nz; ++z) {
    for (std::size_t y = 0; y < out.dims.ny; ++y) {
      std::ptrdiff_t s = base + static_cast<std::ptrdiff_t>(z) * step[2] + static_cast<std::ptrdiff_t>(y) * step[1];
      for (std::size_t x = 0; x < out.dims.nx; ++x, ++o, s += step[0]) out.voxels[o] = src.voxels[s];
    }
  }

  const Affine& a = src.affine;
  const auto origin = a.apply(origin_index[0], origin_index[1], origin_index[2]);
  for (int i = 0; i < 3; ++i) {
    const int j = r.source_axis[i];
    const double sign = r.flip[i] ? -1.0 : 1.0;
    for (int row = 0; row < 3; ++row) out.affine.m[row][i] = sign * a.m[row][j];
    out.spacing[i] = src.spacing[j];
  }
  for (int row = 0; row < 3; ++row) out.affine.m[row][3] = origin[row];
  return out;
}

template <typename T>
void rescale_affine(const Image3<T>& src, Image3<T>& out, double factor) {
  out.copy_meta_from(src);
  out.preprocessed = src.preprocessed;
  out.spacing[0] = src.spacing[0] / factor;
  out.spacing[1] = src.spacing[1] / factor;
  const double shift = 0.5 / factor - 0.5;
  for (int row = 0; row < 3; ++row) {
    out.affine.m[row][3] = src.affine.m[row][3] + src.affine.m[row][0] * shift + src.affine.m[row][1] * shift;
    out.affine.m[row][0] = src.affine.m[row][0] / factor;
    out.affine.m[row][1] = src.affine.m[row][1] / factor;
  }
}

void check_factor(double factor) {
  if (!(factor > 0.0 && factor <= 1.0)) throw Error(ErrorCode::InvalidArgument, "rescale factor must lie in (0, 1]");
}

}  // namespace

void PreprocessConfig::validate() const {
  if (!(clip_lo < clip_hi)) throw Error(ErrorCode::InvalidArgument, "clip_lo must be below clip_hi");
  check_factor(rescale_factor);
  if (!(clahe_clip_limit > 0.0 && clahe_clip_limit <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "clahe_clip_limit must lie in (0, 1]");
  if (clahe_bins < 2) throw Error(ErrorCode::InvalidArgument, "clahe_bins must be at least 2");
}

void save_stats(const NormalizationStats& stats, const std::filesystem::path& path) {
  const nlohmann::json j = {{"mu", stats.mu}, {"sigma", stats.sigma}, {"corpus", stats.corpus}};
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  f << j.dump(2) << '\n';
}

NormalizationStats load_stats(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(f);
    NormalizationStats s;
    s.mu = j.at("mu").get<float>();
    s.sigma = j.at("sigma").get<float>();
    if (j.contains("corpus")) s.corpus = j.at("corpus").get<std::vector<std::string>>();
    if (!(s.sigma > 0.0f) || !std::isfinite(s.mu) || !std::isfinite(s.sigma))
      throw Error(ErrorCode::ZeroVariance, "stats sidecar has non-positive sigma");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("stats sidecar: ") + e.what());
  }
}

bool Reorientation::is_identity() const noexcept {
  return source_axis == std::array<int, 3>{0, 1, 2} && !flip[0] && !flip[1] && !flip[2];
}

Dims Reorientation::target_dims() const noexcept {
  const std::array<std::size_t, 3> n{source_dims.nx, source_dims.ny, source_dims.nz};
  return {n[source_axis[0]], n[source_axis[1]], n[source_axis[2]]};
}

Reorientation plan_reorientation(const Affine& affine, const Dims& dims, const Spacing& spacing) {
  Reorientation r;
  r.source_dims = dims;
  r.source_spacing = spacing;
  r.source_affine = affine;
  std::array<int, 3> world_of{-1, -1, -1};
  for (int j = 0; j < 3; ++j) {
    double norm = 0.0;
    int best = 0;
    for (int i = 0; i < 3; ++i) {
      norm += affine.m[i][j] * affine.m[i][j];
      if (std::fabs(affine.m[i][j]) > std::fabs(affine.m[best][j])) best = i;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) throw Error(ErrorCode::ObliqueAffine, "degenerate affine column");
    for (int i = 0; i < 3; ++i) {
      if (i != best && std::fabs(affine.m[i][j]) > kObliqueTolerance * norm)
        throw Error(ErrorCode::ObliqueAffine, "voxel axis " + std::to_string(j) + " is not world-aligned");
    }
    world_of[j] = best;
  }
  std::array<bool, 3> used{false, false, false};
  for (int j = 0; j < 3; ++j) {
    if (used[world_of[j]]) throw Error(ErrorCode::ObliqueAffine, "two voxel axes map to one world axis");
    used[world_of[j]] = true;
    r.source_axis[world_of[j]] = j;
    r.flip[world_of[j]] = affine.m[world_of[j]][j] < 0.0;
  }
  return r;
}

Volume apply_reorientation(const Volume& v, const Reorientation& r) { return reorient_impl(v, r); }
LabelMask apply_reorientation(const LabelMask& m, const Reorientation& r) { return reorient_impl(m, r); }

Volume reorient_canonical(const Volume& v) {
  const auto r = plan_reorientation(v.affine, v.dims, v.spacing);
  return r.is_identity() ? v : reorient_impl(v, r);
}

LabelMask reorient_canonical(const LabelMask& m) {
  const auto r = plan_reorientation(m.affine, m.dims, m.spacing);
  return r.is_identity() ? m : reorient_impl(m, r);
}

LabelMask undo_reorientation(const LabelMask& m, const Reorientation& r) {
  if (!(m.dims == r.target_dims())) throw Error(ErrorCode::ShapeMismatch, "mask does not match reoriented grid");
  LabelMask out(r.source_dims);
  out.source_id = m.source_id;
  out.spacing = r.source_spacing;
  out.affine = r.source_affine;
  if (r.is_identity()) {
    out.voxels = m.voxels;
    return out;
  }
  // The forward map is a bijection; reuse it and scatter instead of gather.
  const std::array<std::size_t, 3> n_old{r.source_dims.nx, r.source_dims.ny, r.source_dims.nz};
  const std::array<std::ptrdiff_t, 3> stride_old{1, static_cast<std::ptrdiff_t>(n_old[0]),
                                                 static_cast<std::ptrdiff_t>(n_old[0] * n_old[1])};
  std::ptrdiff_t base = 0;
  std::array<std::ptrdiff_t, 3> step{};
  for (int i = 0; i < 3; ++i) {
    const int j = r.source_axis[i];
    if (r.flip[i]) {
      base += static_cast<std::ptrdiff_t>(n_old[j] - 1) * stride_old[j];
      step[i] = -stride_old[j];
    } else {
      step[i] = stride_old[j];
    }
  }
  std::size_t o = 0;
  for (std::size_t z = 0; z < m.dims.nz; ++z) {
    for (std::size_t y = 0; y < m.dims.ny; ++y) {
      std::ptrdiff_t s = base + static_cast<std::ptrdiff_t>(z) * step[2] + static_cast<std::ptrdiff_t>(y) * step[1];
      for (std::size_t x = 0; x < m.dims.nx; ++x, ++o, s += step[0]) out.voxels[s] = m.voxels[o];
    }
  }
  return out;
}

Volume rescale_inplane(const Volume& v, double factor) {
  check_factor(factor);
  if (factor == 1.0) return v;
  const std::size_t nx = scaled_extent(v.dims.nx, factor);
  const std::size_t ny = scaled_extent(v.dims.ny, factor);
  if (nx == 0 || ny == 0) throw Error(ErrorCode::InvalidArgument, "rescale produces an empty grid");
  Volume out(Dims{nx, ny, v.dims.nz});
  rescale_affine(v, out, factor);

  struct Tap {
    std::size_t i0, i1;
    float t;
  };
  auto taps = [factor](std::size_t n_out, std::size_t n_in) {
    std::vector<Tap> out_taps(n_out);
    for (std::size_t o = 0; o < n_out; ++o) {
      double s = (static_cast<double>(o) + 0.5) / factor - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
      const auto i0 = static_cast<std::size_t>(std::floor(s));
      out_taps[o] = {i0, std::min(i0 + 1, n_in - 1), static_cast<float>(s - static_cast<double>(i0))};
    }
    return out_taps;
  };
  const auto tx = taps(nx, v.dims.nx);
  const auto ty = taps(ny, v.dims.ny);
  for (std::size_t z = 0; z < v.dims.nz; ++z) {
    const float* src = v.slice(z);
    float* dst = out.slice(z);
    for (std::size_t y = 0; y < ny; ++y) {
      const float* r0 = src + ty[y].i0 * v.dims.nx;
      const float* r1 = src + ty[y].i1 * v.dims.nx;
      for (std::size_t x = 0; x < nx; ++x) {
        const Tap& h = tx[x];
        // Lerp form keeps constant regions exactly constant.
        const float a = r0[h.i0] + h.t * (r0[h.i1] - r0[h.i0]);
        const float b = r1[h.i0] + h.t * (r1[h.i1] - r1[h.i0]);
        dst[x + y * nx] = a + ty[y].t * (b - a);
      }
    }
  }
  return out;
}

LabelMask rescale_mask_inplane(const LabelMask& m, double factor) {
  check_factor(factor);
  if (factor == 1.0) return m;
  const std::size_t nx = scaled_extent(m.dims.nx, factor);
  const std::size_t ny = scaled_extent(m.dims.ny, factor);
  if (nx == 0 || ny == 0) throw Error(ErrorCode::InvalidArgument, "rescale produces an empty grid");
  LabelMask out(Dims{nx, ny, m.dims.nz});
  rescale_affine(m, out, factor);
  auto nearest = [factor](std::size_t o, std::size_t n_in) {
    const auto s = static_cast<std::size_t>(std::floor((static_cast<double>(o) + 0.5) / factor));
    return std::min(s, n_in - 1);
  };
  for (std::size_t z = 0; z < m.dims.nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x)
        out.at(x, y, z) = m.at(nearest(x, m.dims.nx), nearest(y, m.dims.ny), z);
  return out;
}

LabelMask resize_mask_inplane(const LabelMask& m, std::size_t nx, std::size_t ny) {
  if (nx == 0 || ny == 0) throw Error(ErrorCode::InvalidArgument, "empty target size");
  if (nx == m.dims.nx && ny == m.dims.ny) return m;
  LabelMask out(Dims{nx, ny, m.dims.nz});
  out.copy_meta_from(m);
  out.spacing[0] = m.spacing[0] * static_cast<double>(m.dims.nx) / static_cast<double>(nx);
  out.spacing[1] = m.spacing[1] * static_cast<double>(m.dims.ny) / static_cast<double>(ny);
  std::vector<std::size_t> sx(nx), sy(ny);
  for (std::size_t x = 0; x < nx; ++x)
    sx[x] = std::min(m.dims.nx - 1, static_cast<std::size_t>((static_cast<double>(x) + 0.5) * static_cast<double>(m.dims.nx) / static_cast<double>(nx)));
  for (std::size_t y = 0; y < ny; ++y)
    sy[y] = std::min(m.dims.ny - 1, static_cast<std::size_t>((static_cast<double>(y) + 0.5) * static_cast<double>(m.dims.ny) / static_cast<double>(ny)));
  for (std::size_t z = 0; z < m.dims.nz; ++z)
    for (std::size_t y = 0; y < ny; ++y)
      for (std::size_t x = 0; x < nx; ++x) out.at(x, y, z) = m.at(sx[x], sy[y], z);
  return out;
}

Volume clip_intensities(Volume v, float lo, float hi) {
  if (!(lo < hi)) throw Error(ErrorCode::InvalidArgument, "clip bounds must satisfy lo < hi");
  for (float& x : v.voxels) x = std::clamp(x, lo, hi);
  return v;
}

Volume standardize_range(Volume v) {
  if (v.voxels.empty()) throw Error(ErrorCode::EmptyInput, "empty volume");
  const auto [mn, mx] = std::minmax_element(v.voxels.begin(), v.voxels.end());
  const float lo = *mn;
  const float hi = *mx;
  if (!(hi > lo)) throw Error(ErrorCode::ConstantVolume, "max equals min");
  const float range = hi - lo;
  for (float& x : v.voxels) x = (x - lo) / range;
  return v;
}

NormalizationStats compute_stats(std::span<const Volume> volumes) {
  // Chan et al. parallel merge of per-volume Welford accumulators.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  NormalizationStats stats;
  for (const Volume& v : volumes) {
    double vm = 0.0;
    double vm2 = 0.0;
    std::size_t vn = 0;
    for (float x : v.voxels) {
      ++vn;
      const double d = x - vm;
      vm += d / static_cast<double>(vn);
      vm2 += d * (x - vm);
    }
    if (vn == 0) continue;
    const double delta = vm - mean;
    const std::size_t total = n + vn;
    mean += delta * static_cast<double>(vn) / static_cast<double>(total);
    m2 += vm2 + delta * delta * static_cast<double>(n) * static_cast<double>(vn) / static_cast<double>(total);
    n = total;
    stats.corpus.push_back(v.source_id);
  }
  if (n == 0) throw Error(ErrorCode::EmptyInput, "no voxels to compute statistics over");
  const double sigma = std::sqrt(m2 / static_cast<double>(n));
  if (!(sigma > 0.0)) throw Error(ErrorCode::ZeroVariance, "all voxels are equal");
  stats.mu = static_cast<float>(mean);
  stats.sigma = static_cast<float>(sigma);
  return stats;
}

Volume znormalize(Volume v, const NormalizationStats& stats) {
  if (!(stats.sigma > 0.0f)) throw Error(ErrorCode::ZeroVariance, "sigma must be positive");
  const double mu = stats.mu;
  const double sigma = stats.sigma;
  for (float& x : v.voxels) x = static_cast<float>((x - mu) / sigma);
  return v;
}

std::vector<std::size_t> stack_indices(std::size_t slice_count, std::size_t k, std::size_t target) {
  std::vector<std::size_t> idx(2 * k + 1);
  const auto last = static_cast<std::ptrdiff_t>(slice_count) - 1;
  for (std::size_t c = 0; c < idx.size(); ++c) {
    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(target) + static_cast<std::ptrdiff_t>(c) - static_cast<std::ptrdiff_t>(k);
    idx[c] = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(s, 0, last));
  }
  return idx;
}

SliceStack assemble_stack(const Volume& v, std::size_t k, std::size_t target) {
  if (target >= v.dims.nz) throw Error(ErrorCode::InvalidArgument, "target slice out of range");
  SliceStack s;
  s.target_index = target;
  s.width = v.dims.nx;
  s.height = v.dims.ny;
  for (std::size_t z : stack_indices(v.dims.nz, k, target)) s.channels.push_back(slice_image(v, z));
  return s;
}

std::vector<SliceStack> assemble_stacks(const Volume& v, std::size_t k) {
  std::vector<SliceStack> out;
  out.reserve(v.dims.nz);
  for (std::size_t z = 0; z < v.dims.nz; ++z) out.push_back(assemble_stack(v, k, z));
  return out;
}

Volume resample_geometry(const Volume& v, const PreprocessConfig& cfg) {
  cfg.validate();
  return rescale_inplane(reorient_canonical(v), cfg.rescale_factor);
}

Volume preprocess_intensities(Volume v, const PreprocessConfig& cfg, const NormalizationStats* stats) {
  if (v.preprocessed) throw Error(ErrorCode::AlreadyPreprocessed, "volume '" + v.source_id + "' was already preprocessed");
  cfg.validate();
  v = standardize_range(clip_intensities(std::move(v), cfg.clip_lo, cfg.clip_hi));
  if (cfg.apply_clahe) v = clahe3d(v, cfg);
  if (stats) v = znormalize(std::move(v), *stats);
  v.preprocessed = true;
  return v;
}

Volume preprocess_volume(const Volume& v, const PreprocessConfig& cfg, const NormalizationStats* stats) {
  if (v.preprocessed) throw Error(ErrorCode::AlreadyPreprocessed, "volume '" + v.source_id + "' was already preprocessed");
  return preprocess_intensities(resample_geometry(v, cfg), cfg, stats);
}

}  // namespace airad
