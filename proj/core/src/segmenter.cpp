#include "airad/segmenter.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

namespace airad {

LabelMask threshold_segmenter(const Volume& v, float lo, float hi) {
  LabelMask m(v.dims);
  m.copy_meta_from(v);
  for (std::size_t i = 0; i < v.voxels.size(); ++i) {
    const float x = v.voxels[i];
    m.voxels[i] = (x >= lo && x <= hi) ? 1 : 0;
  }
  return m;
}

LabelMask ThresholdSegmenter::segment(const SegmenterInput& input, const SliceProgress& progress) const {
  LabelMask m = threshold_segmenter(input.intensities, lo_, hi_);
  if (progress) progress(input.intensities.dims.nz, input.intensities.dims.nz);
  return m;
}

std::string ThresholdSegmenter::describe() const {
  std::ostringstream s;
  s << "threshold[" << lo_ << ", " << hi_ << "]";
  return s.str();
}

UNetSegmenter::UNetSegmenter(std::shared_ptr<const WeightStore> weights, float threshold)
    : weights_(std::move(weights)), threshold_(threshold) {
  if (!weights_) throw Error(ErrorCode::ModelLoadError, "null weight store");
}

LabelMask UNetSegmenter::segment(const SegmenterInput& input, const SliceProgress& progress) const {
  return segment_slicewise(input.features, *weights_, threshold_, progress);
}

std::string UNetSegmenter::describe() const { return "unet[" + weights_->config_hash() + "]"; }

namespace {

ModelBinding binding_from(const nlohmann::json& j) {
  ModelBinding b;
  const std::string type = j.at("type").get<std::string>();
  if (type == "unet") {
    b.kind = ModelBinding::Kind::UNet;
    b.weights = j.at("weights").get<std::string>();
  } else if (type == "threshold") {
    b.kind = ModelBinding::Kind::Threshold;
    auto bound = [](const nlohmann::json& v, float fallback) {
      if (v.is_null()) return fallback;
      if (v.is_string()) return v.get<std::string>().front() == '-' ? -INFINITY : INFINITY;
      return v.get<float>();
    };
    b.lo = bound(j.at("lo"), -INFINITY);
    b.hi = bound(j.at("hi"), INFINITY);
  } else {
    throw Error(ErrorCode::ModelLoadError, "unknown model type '" + type + "'");
  }
  return b;
}

}  // namespace

ModelBinding ModelBinding::from_json_text(const std::string& text) {
  try {
    return binding_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ModelLoadError, std::string("model binding: ") + e.what());
  }
}

ModelBinding ModelBinding::from_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::ModelLoadError, "model file not found: " + path.string());
  if (WeightStore::has_magic(path)) {
    ModelBinding b;
    b.kind = Kind::UNet;
    b.weights = path;
    return b;
  }
  std::ifstream f(path);
  const std::string text{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  ModelBinding b = from_json_text(text);
  if (b.kind == Kind::UNet && b.weights.is_relative()) b.weights = path.parent_path() / b.weights;
  return b;
}

std::string ModelBinding::to_json_text() const {
  nlohmann::json j;
  if (kind == Kind::UNet) {
    j = {{"type", "unet"}, {"weights", weights.string()}};
  } else {
    auto bound = [](float v) -> nlohmann::json {
      if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
      return v;
    };
    j = {{"type", "threshold"}, {"lo", bound(lo)}, {"hi", bound(hi)}};
  }
  return j.dump();
}

std::shared_ptr<const Segmenter> load_segmenter(const ModelBinding& binding, float threshold) {
  if (binding.kind == ModelBinding::Kind::Threshold) return std::make_shared<ThresholdSegmenter>(binding.lo, binding.hi);
  try {
    auto store = std::make_shared<const WeightStore>(WeightStore::load(binding.weights));
    return std::make_shared<UNetSegmenter>(std::move(store), threshold);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ModelLoadError) throw;
    throw Error(ErrorCode::ModelLoadError, e.what());
  }
}

}  // namespace airad
