#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "airad/image.hpp"
#include "airad/segmenter.hpp"

namespace airad {

struct IntensityBand {
  float lo = 0.0f;
  float hi = 0.0f;

  bool overlaps(const IntensityBand& o) const noexcept { return lo <= o.hi && o.lo <= hi; }
  bool contains(float v) const noexcept { return v >= lo && v <= hi; }
};

/// Geometry is in mm, measured from the centre of voxel (0, 0, 0).
struct Ellipsoid {
  std::array<double, 3> center{};
  std::array<double, 3> radii{};
};

struct Sphere {
  std::array<double, 3> center{};
  double radius = 0.0;
};

/// Capsule around the segment a-b.
struct Tube {
  std::array<double, 3> a{};
  std::array<double, 3> b{};
  double radius = 0.0;
};

struct PhantomSpec {
  Dims dims{64, 64, 64};
  Spacing spacing{1.0, 1.0, 1.0};
  Ellipsoid liver;
  IntensityBand liver_band{55.0f, 90.0f};
  std::vector<Sphere> tumors;
  IntensityBand tumor_band{20.0f, 45.0f};
  std::vector<Tube> vessels;
  IntensityBand vessel_band{150.0f, 220.0f};
  float background = -300.0f;
  /// Half-width of uniform additive noise.
  float noise = 0.0f;

  /// SpecOverlap when bands intersect or hold the background value;
  /// InvalidSpec for bad geometry, including lesions outside the liver.
  void validate() const;
  std::string to_json() const;
  static PhantomSpec from_json(const std::string& text);
};

/// A liver ellipsoid with two tumors and one vessel, scaled to an n^3 grid.
PhantomSpec default_phantom_spec(std::size_t n = 64);

struct Phantom {
  Volume volume;
  /// 0 background, 1 liver, 2 tumor, 3 vessel (vessel wins over tumor).
  LabelMask truth;
};

/// Deterministic in (spec, seed). Noise-free voxels lie inside their tissue band.
Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed, std::string source_id = "phantom");

/// Threshold bindings reproducing the phantom's tissues from raw intensities:
/// the liver binding spans all three organ bands.
struct OracleBindings {
  ModelBinding liver;
  ModelBinding tumor;
  ModelBinding vessel;
};
OracleBindings oracle_bindings(const PhantomSpec& spec);

}  // namespace airad
