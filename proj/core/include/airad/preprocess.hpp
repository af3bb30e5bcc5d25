#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "airad/image.hpp"

namespace airad {

struct PreprocessConfig {
  float clip_lo = -100.0f;
  float clip_hi = 400.0f;
  double rescale_factor = 0.5;
  /// CLAHE window per axis in voxels; 0 selects ceil(dim / 8).
  std::array<std::size_t, 3> clahe_kernel{0, 0, 0};
  double clahe_clip_limit = 0.01;
  std::size_t clahe_bins = 256;
  /// Half-width of the 2.5D context: stacks carry 2k+1 slices.
  std::size_t k = 2;
  bool apply_clahe = true;

  void validate() const;
};

struct NormalizationStats {
  float mu = 0.0f;
  float sigma = 1.0f;
  std::vector<std::string> corpus;
};

void save_stats(const NormalizationStats& stats, const std::filesystem::path& path);
NormalizationStats load_stats(const std::filesystem::path& path);

/// Axis permutation and flips taking a grid to positive-diagonal orientation.
/// New voxel axis i reads source axis `source_axis[i]`, mirrored when `flip[i]`.
struct Reorientation {
  std::array<int, 3> source_axis{0, 1, 2};
  std::array<bool, 3> flip{false, false, false};
  Dims source_dims;
  Spacing source_spacing{1, 1, 1};
  Affine source_affine;

  bool is_identity() const noexcept;
  Dims target_dims() const noexcept;
};

/// Throws ObliqueAffine when a voxel axis is not aligned with a world axis.
Reorientation plan_reorientation(const Affine& affine, const Dims& dims, const Spacing& spacing);

Volume reorient_canonical(const Volume& v);
LabelMask reorient_canonical(const LabelMask& m);
Volume apply_reorientation(const Volume& v, const Reorientation& r);
LabelMask apply_reorientation(const LabelMask& m, const Reorientation& r);
/// Maps a mask on the reoriented grid back onto the source grid.
LabelMask undo_reorientation(const LabelMask& m, const Reorientation& r);

Volume rescale_inplane(const Volume& v, double factor);
LabelMask rescale_mask_inplane(const LabelMask& m, double factor);
/// Nearest-neighbour in-plane resize to an explicit target size.
LabelMask resize_mask_inplane(const LabelMask& m, std::size_t nx, std::size_t ny);

Volume clip_intensities(Volume v, float lo, float hi);
/// (v - min) / (max - min) using the volume's own extremes.
Volume standardize_range(Volume v);
Volume clahe3d(const Volume& v, const PreprocessConfig& cfg);
NormalizationStats compute_stats(std::span<const Volume> volumes);
Volume znormalize(Volume v, const NormalizationStats& stats);

struct SliceStack {
  std::vector<Image2> channels;
  std::size_t target_index = 0;
  std::size_t width = 0;
  std::size_t height = 0;
};

/// Slice indices feeding the stack for `target`; out-of-range indices
/// repeat the nearest edge slice.
std::vector<std::size_t> stack_indices(std::size_t slice_count, std::size_t k, std::size_t target);
SliceStack assemble_stack(const Volume& v, std::size_t k, std::size_t target);
std::vector<SliceStack> assemble_stacks(const Volume& v, std::size_t k);

/// Reorient and rescale in-plane. Intensities are resampled, not transformed.
Volume resample_geometry(const Volume& v, const PreprocessConfig& cfg);
/// clip -> standardize -> CLAHE -> z-normalization (skipped without stats).
Volume preprocess_intensities(Volume v, const PreprocessConfig& cfg, const NormalizationStats* stats);
/// The full ordered chain. Rejects volumes already marked preprocessed.
Volume preprocess_volume(const Volume& v, const PreprocessConfig& cfg, const NormalizationStats* stats = nullptr);

}  // namespace airad
