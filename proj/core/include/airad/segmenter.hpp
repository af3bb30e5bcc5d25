#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "airad/image.hpp"
#include "airad/unet.hpp"

namespace airad {

/// What a segmenter sees for one volume. Both volumes share one grid:
/// `features` went through the intensity chain, `intensities` holds the
/// resampled source values (HU for CT). Liver-masked in the tumor/vessel phases.
struct SegmenterInput {
  const Volume& features;
  const Volume& intensities;
};

class Segmenter {
 public:
  virtual ~Segmenter() = default;
  /// Binary mask on the input grid.
  virtual LabelMask segment(const SegmenterInput& input, const SliceProgress& progress = {}) const = 0;
  virtual std::string describe() const = 0;
};

/// Voxel in [lo, hi] -> 1, else 0.
LabelMask threshold_segmenter(const Volume& v, float lo, float hi);

/// Deterministic analytic backend; thresholds the `intensities` volume.
class ThresholdSegmenter final : public Segmenter {
 public:
  ThresholdSegmenter(float lo, float hi) : lo_(lo), hi_(hi) {}
  LabelMask segment(const SegmenterInput& input, const SliceProgress& progress = {}) const override;
  std::string describe() const override;

 private:
  float lo_;
  float hi_;
};

class UNetSegmenter final : public Segmenter {
 public:
  UNetSegmenter(std::shared_ptr<const WeightStore> weights, float threshold);
  LabelMask segment(const SegmenterInput& input, const SliceProgress& progress = {}) const override;
  std::string describe() const override;
  const WeightStore& weights() const noexcept { return *weights_; }

 private:
  std::shared_ptr<const WeightStore> weights_;
  float threshold_;
};

/// A model selection: either a UNETW1 weight file or an analytic threshold spec.
struct ModelBinding {
  enum class Kind { UNet, Threshold };
  Kind kind = Kind::Threshold;
  std::filesystem::path weights;
  float lo = 0.0f;
  float hi = 0.0f;

  /// Accepts {"type":"unet","weights":path} or {"type":"threshold","lo":a,"hi":b}.
  static ModelBinding from_json_text(const std::string& text);
  /// A weight file (detected by magic) or a JSON threshold spec file.
  static ModelBinding from_file(const std::filesystem::path& path);
  std::string to_json_text() const;
};

/// ModelLoadError when the binding cannot be turned into a segmenter.
std::shared_ptr<const Segmenter> load_segmenter(const ModelBinding& binding, float threshold);

}  // namespace airad
