#include "airad/cascade.hpp"

#include <algorithm>
#include <chrono>
#include <future>
#include <mutex>
#include <vector>

#include <nlohmann/json.hpp>

namespace airad {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const char* tissue_name(Tissue t) {
  switch (t) {
    case Tissue::Liver: return "liver";
    case Tissue::Tumor: return "tumor";
    case Tissue::Vessel: return "vessel";
    default: return "background";
  }
}

Tissue tissue_from(const std::string& s) {
  if (s == "liver") return Tissue::Liver;
  if (s == "tumor") return Tissue::Tumor;
  if (s == "vessel") return Tissue::Vessel;
  throw Error(ErrorCode::InvalidArgument, "unknown tissue '" + s + "'");
}

template <typename F>
auto in_phase(CascadePhase phase, F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(to_string(phase)) + ": " + e.message());
  }
}

// Binarizes a segmenter's output in place: anything nonzero is foreground.
void binarize(LabelMask& m) {
  for (auto& v : m.voxels) v = v ? 1 : 0;
}

// A lesion segmenter may still fire on the zeroed background it was shown.
void clip_to(LabelMask& m, const LabelMask& liver) {
  for (std::size_t i = 0; i < m.voxels.size(); ++i)
    if (!liver.voxels[i]) m.voxels[i] = 0;
}

LabelMask restore(const LabelMask& m, const Reorientation& r) {
  const Dims target = r.target_dims();
  LabelMask resized = (m.dims.nx == target.nx && m.dims.ny == target.ny) ? m : resize_mask_inplane(m, target.nx, target.ny);
  return undo_reorientation(resized, r);
}

}  // namespace

const char* to_string(CascadePhase p) noexcept {
  switch (p) {
    case CascadePhase::Preprocessing: return "preprocessing";
    case CascadePhase::Liver: return "liver";
    case CascadePhase::Tumors: return "tumors";
    case CascadePhase::Vessels: return "vessels";
    case CascadePhase::Merging: return "merging";
  }
  return "unknown";
}

void CascadeConfig::validate() const {
  Precedence sorted = label_precedence;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != Precedence{Tissue::Liver, Tissue::Tumor, Tissue::Vessel})
    throw Error(ErrorCode::InvalidArgument, "label precedence must be a permutation of liver, tumor, vessel");
  if (!(threshold >= 0.0f && threshold <= 1.0f)) throw Error(ErrorCode::InvalidArgument, "threshold must lie in [0, 1]");
  preprocess.validate();
}

std::string CascadeConfig::to_json() const {
  nlohmann::json j;
  j["liver_model"] = nlohmann::json::parse(liver_model.to_json_text());
  j["tumor_model"] = nlohmann::json::parse(tumor_model.to_json_text());
  j["vessel_model"] = nlohmann::json::parse(vessel_model.to_json_text());
  j["threshold"] = threshold;
  j["label_precedence"] = nlohmann::json::array();
  for (Tissue t : label_precedence) j["label_precedence"].push_back(tissue_name(t));
  j["restore_native"] = restore_native;
  j["lcc_filter"] = lcc_filter;
  j["mask_vessels"] = mask_vessels;
  j["parallel"] = parallel;
  j["preprocess"] = {{"clip_lo", preprocess.clip_lo},
                     {"clip_hi", preprocess.clip_hi},
                     {"rescale_factor", preprocess.rescale_factor},
                     {"clahe_kernel", preprocess.clahe_kernel},
                     {"clahe_clip_limit", preprocess.clahe_clip_limit},
                     {"clahe_bins", preprocess.clahe_bins},
                     {"k", preprocess.k},
                     {"apply_clahe", preprocess.apply_clahe}};
  if (stats) j["stats"] = {{"mu", stats->mu}, {"sigma", stats->sigma}};
  return j.dump();
}

CascadeConfig CascadeConfig::from_json(const std::string& text) {
  CascadeConfig cfg;
  try {
    const auto j = nlohmann::json::parse(text);
    auto binding = [&](const char* key, ModelBinding& out) {
      if (j.contains(key)) out = ModelBinding::from_json_text(j.at(key).dump());
    };
    binding("liver_model", cfg.liver_model);
    binding("tumor_model", cfg.tumor_model);
    binding("vessel_model", cfg.vessel_model);
    cfg.threshold = j.value("threshold", cfg.threshold);
    if (j.contains("label_precedence")) {
      const auto names = j.at("label_precedence").get<std::vector<std::string>>();
      if (names.size() != 3) throw Error(ErrorCode::InvalidArgument, "label precedence must list three tissues");
      for (std::size_t i = 0; i < 3; ++i) cfg.label_precedence[i] = tissue_from(names[i]);
    }
    cfg.restore_native = j.value("restore_native", cfg.restore_native);
    cfg.lcc_filter = j.value("lcc_filter", cfg.lcc_filter);
    cfg.mask_vessels = j.value("mask_vessels", cfg.mask_vessels);
    cfg.parallel = j.value("parallel", cfg.parallel);
    if (j.contains("preprocess")) {
      const auto& p = j.at("preprocess");
      auto& c = cfg.preprocess;
      c.clip_lo = p.value("clip_lo", c.clip_lo);
      c.clip_hi = p.value("clip_hi", c.clip_hi);
      c.rescale_factor = p.value("rescale_factor", c.rescale_factor);
      c.clahe_kernel = p.value("clahe_kernel", c.clahe_kernel);
      c.clahe_clip_limit = p.value("clahe_clip_limit", c.clahe_clip_limit);
      c.clahe_bins = p.value("clahe_bins", c.clahe_bins);
      c.k = p.value("k", c.k);
      c.apply_clahe = p.value("apply_clahe", c.apply_clahe);
    }
    if (j.contains("stats")) {
      NormalizationStats s;
      s.mu = j.at("stats").at("mu").get<float>();
      s.sigma = j.at("stats").at("sigma").get<float>();
      cfg.stats = s;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("cascade config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

CascadeModels CascadeModels::load(const CascadeConfig& cfg) {
  CascadeModels m;
  m.liver = load_segmenter(cfg.liver_model, cfg.threshold);
  m.tumor = load_segmenter(cfg.tumor_model, cfg.threshold);
  m.vessel = load_segmenter(cfg.vessel_model, cfg.threshold);
  return m;
}

Volume apply_liver_mask(const Volume& v, const LabelMask& liver) {
  require_same_dims(v, liver, "apply_liver_mask");
  Volume out = v;
  for (std::size_t i = 0; i < out.voxels.size(); ++i)
    if (!liver.voxels[i]) out.voxels[i] = 0.0f;
  return out;
}

LabelMask merge_labels(const LabelMask& liver, const LabelMask& tumors, const LabelMask& vessels,
                       const Precedence& precedence) {
  require_same_dims(liver, tumors, "merge_labels");
  require_same_dims(liver, vessels, "merge_labels");
  LabelMask out(liver.dims);
  out.copy_meta_from(liver);
  auto source = [&](Tissue t) -> const LabelMask& {
    switch (t) {
      case Tissue::Tumor: return tumors;
      case Tissue::Vessel: return vessels;
      default: return liver;
    }
  };
  // Paint lowest precedence first so higher ones overwrite.
  for (auto it = precedence.rbegin(); it != precedence.rend(); ++it) {
    const LabelMask& m = source(*it);
    const auto label = static_cast<std::uint8_t>(*it);
    for (std::size_t i = 0; i < out.voxels.size(); ++i)
      if (m.voxels[i]) out.voxels[i] = label;
  }
  return out;
}

LabelMask largest_connected_component(const LabelMask& m) {
  const Dims d = m.dims;
  std::vector<std::uint32_t> comp(d.count(), 0);
  std::vector<std::size_t> queue;
  std::uint32_t best_id = 0, next_id = 0;
  std::size_t best_size = 0;
  for (std::size_t seed = 0; seed < d.count(); ++seed) {
    if (!m.voxels[seed] || comp[seed]) continue;
    const std::uint32_t id = ++next_id;
    queue.assign(1, seed);
    comp[seed] = id;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t i = queue[head];
      const std::size_t x = i % d.nx, y = (i / d.nx) % d.ny, z = i / d.slice_size();
      auto visit = [&](std::size_t j) {
        if (m.voxels[j] && !comp[j]) {
          comp[j] = id;
          queue.push_back(j);
        }
      };
      if (x > 0) visit(i - 1);
      if (x + 1 < d.nx) visit(i + 1);
      if (y > 0) visit(i - d.nx);
      if (y + 1 < d.ny) visit(i + d.nx);
      if (z > 0) visit(i - d.slice_size());
      if (z + 1 < d.nz) visit(i + d.slice_size());
    }
    if (queue.size() > best_size) {
      best_size = queue.size();
      best_id = id;
    }
  }
  LabelMask out(d);
  out.copy_meta_from(m);
  for (std::size_t i = 0; i < d.count(); ++i) out.voxels[i] = (best_id && comp[i] == best_id) ? 1 : 0;
  return out;
}

CascadeResult run_cascade(const Volume& v, const CascadeConfig& cfg, const CascadeProgress& progress) {
  cfg.validate();
  const CascadeModels models = CascadeModels::load(cfg);
  return run_cascade(v, cfg, models, progress);
}

CascadeResult run_cascade(const Volume& v, const CascadeConfig& cfg, const CascadeModels& models,
                          const CascadeProgress& progress) {
  cfg.validate();
  if (!models.liver || !models.tumor || !models.vessel)
    throw Error(ErrorCode::ModelLoadError, "cascade needs three segmenters");
  CascadeResult result;
  std::mutex progress_mutex;
  auto report = [&](CascadePhase phase, std::size_t done, std::size_t total) {
    if (!progress) return;
    std::lock_guard lock(progress_mutex);
    progress(phase, done, total);
  };
  auto slice_progress = [&](CascadePhase phase) -> SliceProgress {
    return [&report, phase](std::size_t done, std::size_t total) { report(phase, done, total); };
  };

  auto t0 = Clock::now();
  report(CascadePhase::Preprocessing, 0, 1);
  Reorientation reorientation;
  Volume intensities, features;
  in_phase(CascadePhase::Preprocessing, [&] {
    reorientation = plan_reorientation(v.affine, v.dims, v.spacing);
    cfg.preprocess.validate();
    intensities = rescale_inplane(reorientation.is_identity() ? v : apply_reorientation(v, reorientation),
                                  cfg.preprocess.rescale_factor);
    features = preprocess_intensities(intensities, cfg.preprocess, cfg.stats ? &*cfg.stats : nullptr);
    return 0;
  });
  report(CascadePhase::Preprocessing, 1, 1);
  result.timings["preprocessing"] = seconds_since(t0);

  t0 = Clock::now();
  LabelMask liver = in_phase(CascadePhase::Liver, [&] {
    LabelMask m = models.liver->segment({features, intensities}, slice_progress(CascadePhase::Liver));
    require_same_dims(m, features, "liver segmenter output");
    binarize(m);
    if (cfg.lcc_filter) m = largest_connected_component(m);
    return m;
  });
  result.timings["liver"] = seconds_since(t0);

  const Volume masked_features = apply_liver_mask(features, liver);
  const Volume masked_intensities = apply_liver_mask(intensities, liver);
  auto tumor_phase = [&] {
    return in_phase(CascadePhase::Tumors, [&] {
      const auto t = Clock::now();
      LabelMask m = models.tumor->segment({masked_features, masked_intensities}, slice_progress(CascadePhase::Tumors));
      require_same_dims(m, features, "tumor segmenter output");
      binarize(m);
      clip_to(m, liver);
      return std::make_pair(std::move(m), seconds_since(t));
    });
  };
  auto vessel_phase = [&] {
    return in_phase(CascadePhase::Vessels, [&] {
      const auto t = Clock::now();
      const SegmenterInput input = cfg.mask_vessels ? SegmenterInput{masked_features, masked_intensities}
                                                    : SegmenterInput{features, intensities};
      LabelMask m = models.vessel->segment(input, slice_progress(CascadePhase::Vessels));
      require_same_dims(m, features, "vessel segmenter output");
      binarize(m);
      clip_to(m, liver);
      return std::make_pair(std::move(m), seconds_since(t));
    });
  };
  std::pair<LabelMask, double> tumors, vessels;
  if (cfg.parallel) {
    auto tumor_future = std::async(std::launch::async, tumor_phase);
    vessels = vessel_phase();
    tumors = tumor_future.get();
  } else {
    tumors = tumor_phase();
    vessels = vessel_phase();
  }
  result.timings["tumors"] = tumors.second;
  result.timings["vessels"] = vessels.second;

  t0 = Clock::now();
  report(CascadePhase::Merging, 0, 1);
  if (cfg.restore_native) {
    result.liver = restore(liver, reorientation);
    result.tumors = restore(tumors.first, reorientation);
    result.vessels = restore(vessels.first, reorientation);
  } else {
    result.liver = std::move(liver);
    result.tumors = std::move(tumors.first);
    result.vessels = std::move(vessels.first);
  }
  result.merged = merge_labels(result.liver, result.tumors, result.vessels, cfg.label_precedence);
  report(CascadePhase::Merging, 1, 1);
  result.timings["merging"] = seconds_since(t0);
  return result;
}

}  // namespace airad
