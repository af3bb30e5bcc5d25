#include "airad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace airad {
namespace {

struct Counts {
  std::size_t pred = 0, gt = 0, both = 0;
};

Counts count_pairs(const LabelMask& pred, const LabelMask& gt) {
  require_same_dims(pred, gt, "metrics");
  Counts c;
  for (std::size_t i = 0; i < pred.voxels.size(); ++i) {
    const bool p = pred.voxels[i] != 0, g = gt.voxels[i] != 0;
    c.pred += p;
    c.gt += g;
    c.both += p && g;
  }
  return c;
}

constexpr std::size_t kLeafSize = 8;

double squared(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

OverlapMetrics overlap_metrics(const LabelMask& pred, const LabelMask& gt) {
  const Counts c = count_pairs(pred, gt);
  OverlapMetrics m;
  if (c.pred == 0 && c.gt == 0) {
    m.dice = m.iou = 1.0;
    m.rvd = 0.0;
    return m;
  }
  const double inter = static_cast<double>(c.both);
  const double uni = static_cast<double>(c.pred + c.gt - c.both);
  m.dice = 2.0 * inter / static_cast<double>(c.pred + c.gt);
  m.iou = inter / uni;
  if (c.gt > 0) m.rvd = (static_cast<double>(c.pred) - static_cast<double>(c.gt)) / static_cast<double>(c.gt);
  return m;
}

double relative_volume_difference(const LabelMask& pred, const LabelMask& gt) {
  const OverlapMetrics m = overlap_metrics(pred, gt);
  if (!m.rvd) throw Error(ErrorCode::EmptyGroundTruth, "relative volume difference undefined for empty ground truth");
  return *m.rvd;
}

SurfacePointSet extract_surface(const LabelMask& m) {
  SurfacePointSet s;
  const Dims d = m.dims;
  auto fg = [&](std::size_t x, std::size_t y, std::size_t z) { return m.voxels[m.index(x, y, z)] != 0; };
  for (std::size_t z = 0; z < d.nz; ++z)
    for (std::size_t y = 0; y < d.ny; ++y)
      for (std::size_t x = 0; x < d.nx; ++x) {
        if (!fg(x, y, z)) continue;
        const bool interior = x > 0 && x + 1 < d.nx && y > 0 && y + 1 < d.ny && z > 0 && z + 1 < d.nz &&
                              fg(x - 1, y, z) && fg(x + 1, y, z) && fg(x, y - 1, z) && fg(x, y + 1, z) &&
                              fg(x, y, z - 1) && fg(x, y, z + 1);
        if (!interior)
          s.points.push_back({static_cast<double>(x) * m.spacing[0], static_cast<double>(y) * m.spacing[1],
                              static_cast<double>(z) * m.spacing[2]});
      }
  return s;
}

KdTree::KdTree(std::vector<Point3> points) : points_(std::move(points)), axis_(points_.size(), 0) {
  if (!points_.empty()) build(0, points_.size());
}

// Implicit tree: the median of [lo, hi) sits at mid, with split axis stored there.
void KdTree::build(std::size_t lo, std::size_t hi) {
  if (hi - lo <= kLeafSize) return;
  Point3 mn = points_[lo], mx = points_[lo];
  for (std::size_t i = lo; i < hi; ++i)
    for (int a = 0; a < 3; ++a) {
      mn[a] = std::min(mn[a], points_[i][a]);
      mx[a] = std::max(mx[a], points_[i][a]);
    }
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (mx[a] - mn[a] > mx[axis] - mn[axis]) axis = a;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(points_.begin() + static_cast<std::ptrdiff_t>(lo), points_.begin() + static_cast<std::ptrdiff_t>(mid),
                   points_.begin() + static_cast<std::ptrdiff_t>(hi),
                   [axis](const Point3& a, const Point3& b) { return a[axis] < b[axis]; });
  axis_[mid] = static_cast<std::uint8_t>(axis);
  build(lo, mid);
  build(mid + 1, hi);
}

void KdTree::search(std::size_t lo, std::size_t hi, const Point3& q, double& best) const {
  if (hi - lo <= kLeafSize) {
    for (std::size_t i = lo; i < hi; ++i) best = std::min(best, squared(points_[i], q));
    return;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  const int axis = axis_[mid];
  best = std::min(best, squared(points_[mid], q));
  const double delta = q[axis] - points_[mid][axis];
  if (delta < 0) {
    search(lo, mid, q, best);
    if (delta * delta < best) search(mid + 1, hi, q, best);
  } else {
    search(mid + 1, hi, q, best);
    if (delta * delta < best) search(lo, mid, q, best);
  }
}

double KdTree::nearest_squared(const Point3& q) const {
  if (points_.empty()) throw Error(ErrorCode::EmptyMask, "nearest-neighbour query on an empty set");
  double best = std::numeric_limits<double>::infinity();
  search(0, points_.size(), q, best);
  return best;
}

double percentile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "percentile of an empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw Error(ErrorCode::InvalidArgument, "percentile must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= values.size()) return values.back();
  const double t = pos - static_cast<double>(i);
  return values[i] + t * (values[i + 1] - values[i]);
}

SurfaceDistances surface_distances(const LabelMask& pred, const LabelMask& gt) {
  require_same_dims(pred, gt, "surface_distances");
  SurfacePointSet sp = extract_surface(pred), sg = extract_surface(gt);
  if (sp.points.empty()) throw Error(ErrorCode::EmptyMask, "prediction mask is empty");
  if (sg.points.empty()) throw Error(ErrorCode::EmptyMask, "ground-truth mask is empty");
  std::vector<double> dist;
  dist.reserve(sp.points.size() + sg.points.size());
  {
    const KdTree tree_gt(sg.points);
    for (const auto& p : sp.points) dist.push_back(std::sqrt(tree_gt.nearest_squared(p)));
  }
  {
    const KdTree tree_pred(sp.points);
    for (const auto& g : sg.points) dist.push_back(std::sqrt(tree_pred.nearest_squared(g)));
  }
  SurfaceDistances out;
  double sum = 0.0, sum_sq = 0.0, mx = 0.0;
  for (double d : dist) {
    sum += d;
    sum_sq += d * d;
    mx = std::max(mx, d);
  }
  const auto n = static_cast<double>(dist.size());
  out.asd = sum / n;
  out.rmsd = std::sqrt(sum_sq / n);
  out.hd = mx;
  out.hd95 = percentile_linear(std::move(dist), 95.0);
  return out;
}

MetricsReport compute_metrics(const LabelMask& pred, const LabelMask& gt) {
  const OverlapMetrics o = overlap_metrics(pred, gt);
  MetricsReport r;
  r.dice = o.dice;
  r.iou = o.iou;
  r.rvd = o.rvd;
  if (count_nonzero(pred) > 0 && count_nonzero(gt) > 0) {
    const SurfaceDistances s = surface_distances(pred, gt);
    r.asd_mm = s.asd;
    r.rmsd_mm = s.rmsd;
    r.hd_mm = s.hd;
    r.hd95_mm = s.hd95;
  }
  return r;
}

std::vector<TissueReport> evaluate(const LabelMask& pred_merged, const LabelMask& gt_merged) {
  require_same_dims(pred_merged, gt_merged, "evaluate");
  std::vector<TissueReport> out;
  out.push_back({"liver", compute_metrics(nonzero_mask(pred_merged), nonzero_mask(gt_merged))});
  out.push_back({"tumor", compute_metrics(extract_label(pred_merged, 2), extract_label(gt_merged, 2))});
  out.push_back({"vessel", compute_metrics(extract_label(pred_merged, 3), extract_label(gt_merged, 3))});
  return out;
}

std::string report_to_json(const std::vector<TissueReport>& reports) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json { return v ? nlohmann::json(*v) : nlohmann::json(); };
  nlohmann::json j = nlohmann::json::object();
  for (const auto& t : reports) {
    const auto& m = t.metrics;
    j[t.tissue] = {{"dice", m.dice},          {"iou", m.iou},         {"rvd", opt(m.rvd)},
                   {"asd_mm", opt(m.asd_mm)}, {"rmsd_mm", opt(m.rmsd_mm)}, {"hd_mm", opt(m.hd_mm)},
                   {"hd95_mm", opt(m.hd95_mm)}};
  }
  return j.dump(2);
}

std::string report_to_table(const std::vector<TissueReport>& reports) {
  std::ostringstream s;
  s << std::left << std::setw(8) << "Tissue" << std::right;
  for (const char* h : {"Dice (%)", "IoU (%)", "RVD", "ASD (mm)", "RMSD (mm)", "HD (mm)", "95% HD (mm)"})
    s << std::setw(13) << h;
  s << '\n';
  auto cell = [&](const std::optional<double>& v, double scale, int prec) {
    if (!v) {
      s << std::setw(13) << "n/a";
      return;
    }
    s << std::setw(13) << std::fixed << std::setprecision(prec) << *v * scale;
  };
  for (const auto& t : reports) {
    s << std::left << std::setw(8) << t.tissue << std::right;
    cell(t.metrics.dice, 100.0, 2);
    cell(t.metrics.iou, 100.0, 2);
    cell(t.metrics.rvd, 1.0, 3);
    cell(t.metrics.asd_mm, 1.0, 2);
    cell(t.metrics.rmsd_mm, 1.0, 2);
    cell(t.metrics.hd_mm, 1.0, 2);
    cell(t.metrics.hd95_mm, 1.0, 2);
    s << '\n';
  }
  return s.str();
}

}  // namespace airad
