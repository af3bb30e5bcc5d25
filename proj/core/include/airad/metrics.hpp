#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "airad/image.hpp"

namespace airad {

struct OverlapMetrics {
  double dice = 0.0;
  double iou = 0.0;
  /// (|P| - |G|) / |G|; empty when the ground truth is empty but the prediction is not.
  std::optional<double> rvd;
};

/// Both-empty masks score dice = iou = 1 and rvd = 0.
OverlapMetrics overlap_metrics(const LabelMask& pred, const LabelMask& gt);
/// EmptyGroundTruth when |G| = 0 and |P| > 0.
double relative_volume_difference(const LabelMask& pred, const LabelMask& gt);

using Point3 = std::array<double, 3>;

struct SurfacePointSet {
  std::vector<Point3> points;
};

/// Foreground voxels with at least one background 6-neighbour, at index * spacing.
/// The volume border counts as background.
SurfacePointSet extract_surface(const LabelMask& m);

struct SurfaceDistances {
  double asd = 0.0;
  double rmsd = 0.0;
  double hd = 0.0;
  double hd95 = 0.0;
};

/// Nearest-neighbour index over a fixed point set.
class KdTree {
 public:
  explicit KdTree(std::vector<Point3> points);
  /// Squared distance to the nearest stored point; the set must be non-empty.
  double nearest_squared(const Point3& q) const;
  std::size_t size() const noexcept { return points_.size(); }

 private:
  void build(std::size_t lo, std::size_t hi);
  void search(std::size_t lo, std::size_t hi, const Point3& q, double& best) const;

  std::vector<Point3> points_;
  std::vector<std::uint8_t> axis_;
};

/// Percentile with linear interpolation between order statistics. `q` in [0, 100].
double percentile_linear(std::vector<double> values, double q);

/// Pooled symmetric surface distances. EmptyMask if either mask is empty.
SurfaceDistances surface_distances(const LabelMask& pred, const LabelMask& gt);

struct MetricsReport {
  double dice = 0.0;
  double iou = 0.0;
  std::optional<double> rvd;
  std::optional<double> asd_mm;
  std::optional<double> rmsd_mm;
  std::optional<double> hd_mm;
  std::optional<double> hd95_mm;
};

/// All seven metrics for one binary pair. Undefined distances stay empty.
MetricsReport compute_metrics(const LabelMask& pred, const LabelMask& gt);

struct TissueReport {
  std::string tissue;
  MetricsReport metrics;
};

/// Liver is the whole organ (any nonzero label); tumor is label 2, vessel label 3.
std::vector<TissueReport> evaluate(const LabelMask& pred_merged, const LabelMask& gt_merged);

/// Undefined values serialize as null. Fractions are emitted as fractions.
std::string report_to_json(const std::vector<TissueReport>& reports);
/// Text table: Dice and IoU in percent, distances in mm, "n/a" when undefined.
std::string report_to_table(const std::vector<TissueReport>& reports);

}  // namespace airad
