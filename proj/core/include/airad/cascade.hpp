#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "airad/image.hpp"
#include "airad/preprocess.hpp"
#include "airad/segmenter.hpp"

namespace airad {

/// Highest precedence first. Default: vessel > tumor > liver.
using Precedence = std::array<Tissue, 3>;
inline constexpr Precedence kDefaultPrecedence{Tissue::Vessel, Tissue::Tumor, Tissue::Liver};

struct CascadeConfig {
  ModelBinding liver_model;
  ModelBinding tumor_model;
  ModelBinding vessel_model;
  float threshold = 0.5f;
  Precedence label_precedence = kDefaultPrecedence;
  bool restore_native = true;
  bool lcc_filter = false;
  /// The vessel phase sees the liver-masked volume unless this is cleared.
  /// Tumor and vessel outputs are clipped to the liver mask either way.
  bool mask_vessels = true;
  /// Run the tumor and vessel phases concurrently.
  bool parallel = true;
  PreprocessConfig preprocess;
  std::optional<NormalizationStats> stats;

  void validate() const;
  std::string to_json() const;
  static CascadeConfig from_json(const std::string& text);
};

enum class CascadePhase { Preprocessing, Liver, Tumors, Vessels, Merging };
const char* to_string(CascadePhase p) noexcept;

/// Called with per-slice progress inside each phase; calls are serialized.
using CascadeProgress = std::function<void(CascadePhase, std::size_t done, std::size_t total)>;

struct CascadeResult {
  LabelMask liver;
  LabelMask tumors;
  LabelMask vessels;
  LabelMask merged;
  /// Wall-clock seconds per phase name.
  std::map<std::string, double> timings;
};

/// Segmenters resolved from bindings; lets callers load once and reuse.
struct CascadeModels {
  std::shared_ptr<const Segmenter> liver;
  std::shared_ptr<const Segmenter> tumor;
  std::shared_ptr<const Segmenter> vessel;

  static CascadeModels load(const CascadeConfig& cfg);
};

/// Voxel-wise product with a binary mask.
Volume apply_liver_mask(const Volume& v, const LabelMask& liver);

LabelMask merge_labels(const LabelMask& liver, const LabelMask& tumors, const LabelMask& vessels,
                       const Precedence& precedence = kDefaultPrecedence);

/// Largest 6-connected foreground component; ties keep the first in scan order.
LabelMask largest_connected_component(const LabelMask& m);

/// Errors raised inside a phase are rethrown with the phase name prefixed.
CascadeResult run_cascade(const Volume& v, const CascadeConfig& cfg, const CascadeProgress& progress = {});
CascadeResult run_cascade(const Volume& v, const CascadeConfig& cfg, const CascadeModels& models,
                          const CascadeProgress& progress = {});

}  // namespace airad
