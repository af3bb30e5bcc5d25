#include "airad/unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

namespace airad {
namespace {

constexpr char kMagic[7] = {'U', 'N', 'E', 'T', 'W', '1', '\0'};

std::string mode_name(UpsampleMode m) {
  return m == UpsampleMode::TransposedConv ? "transposed_conv" : "bilinear_then_conv";
}

UpsampleMode parse_mode(const std::string& s) {
  if (s == "transposed_conv") return UpsampleMode::TransposedConv;
  if (s == "bilinear_then_conv") return UpsampleMode::BilinearThenConv;
  throw Error(ErrorCode::InvalidArgument, "unknown upsample_mode '" + s + "'");
}

nlohmann::json config_json(const UNetConfig& cfg) {
  return {{"levels", cfg.levels},
          {"channels_per_level", cfg.channels_per_level},
          {"in_channels", cfg.in_channels},
          {"out_channels", cfg.out_channels},
          {"upsample_mode", mode_name(cfg.upsample_mode)}};
}

UNetConfig config_from(const nlohmann::json& j) {
  UNetConfig cfg;
  cfg.levels = j.at("levels").get<std::size_t>();
  cfg.channels_per_level = j.at("channels_per_level").get<std::vector<std::size_t>>();
  cfg.in_channels = j.at("in_channels").get<std::size_t>();
  cfg.out_channels = j.value("out_channels", std::size_t{1});
  cfg.upsample_mode = parse_mode(j.value("upsample_mode", std::string("transposed_conv")));
  cfg.validate();
  return cfg;
}

// Box-Muller on raw mt19937_64 output so weights are identical across
// standard library implementations.
class NormalStream {
 public:
  explicit NormalStream(std::uint64_t seed) : rng_(seed) {}
  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

float open_sigmoid(float x) {
  static const float lo = std::numeric_limits<float>::denorm_min();
  static const float hi = std::nextafter(1.0f, 0.0f);
  const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x)));
  return std::clamp(static_cast<float>(s), lo, hi);
}

}  // namespace

void UNetConfig::validate() const {
  if (levels < 1) throw Error(ErrorCode::InvalidArgument, "U-Net needs at least one level");
  if (channels_per_level.size() != levels)
    throw Error(ErrorCode::InvalidArgument, "channels_per_level length must equal levels");
  if (std::any_of(channels_per_level.begin(), channels_per_level.end(), [](std::size_t c) { return c == 0; }))
    throw Error(ErrorCode::InvalidArgument, "zero-width level");
  if (in_channels == 0 || in_channels % 2 == 0)
    throw Error(ErrorCode::InvalidArgument, "in_channels must be 2k+1");
  if (out_channels == 0) throw Error(ErrorCode::InvalidArgument, "out_channels must be positive");
}

std::string UNetConfig::to_json() const { return config_json(*this).dump(); }

UNetConfig UNetConfig::from_json(const std::string& text) {
  try {
    return config_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("U-Net config: ") + e.what());
  }
}

std::vector<std::size_t> LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::Conv3x3: return {out_channels, in_channels, 3, 3};
    case LayerKind::UpConv2x2: return {in_channels, out_channels, 2, 2};
    case LayerKind::Conv1x1: return {out_channels, in_channels, 1, 1};
  }
  return {};
}

std::size_t LayerSpec::weight_count() const {
  std::size_t n = 1;
  for (std::size_t d : weight_shape()) n *= d;
  return n;
}

std::vector<LayerSpec> unet_layers(const UNetConfig& cfg) {
  cfg.validate();
  const auto& ch = cfg.channels_per_level;
  std::vector<LayerSpec> layers;
  std::size_t in = cfg.in_channels;
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    const std::string p = "enc" + std::to_string(l);
    layers.push_back({p + ".conv1", LayerKind::Conv3x3, in, ch[l]});
    layers.push_back({p + ".conv2", LayerKind::Conv3x3, ch[l], ch[l]});
    in = ch[l];
  }
  for (std::size_t l = cfg.levels - 1; l-- > 0;) {
    const std::string p = "dec" + std::to_string(l);
    if (cfg.upsample_mode == UpsampleMode::TransposedConv) {
      layers.push_back({p + ".up", LayerKind::UpConv2x2, ch[l + 1], ch[l]});
    } else {
      layers.push_back({p + ".up", LayerKind::Conv3x3, ch[l + 1], ch[l]});
    }
    layers.push_back({p + ".conv1", LayerKind::Conv3x3, 2 * ch[l], ch[l]});
    layers.push_back({p + ".conv2", LayerKind::Conv3x3, ch[l], ch[l]});
  }
  layers.push_back({"head", LayerKind::Conv1x1, ch[0], cfg.out_channels});
  return layers;
}

std::size_t ParamCount::of(const std::string& layer) const {
  for (const auto& [name, n] : per_layer)
    if (name == layer) return n;
  throw Error(ErrorCode::InvalidArgument, "no layer named " + layer);
}

ParamCount param_count(const UNetConfig& cfg) {
  ParamCount pc;
  for (const auto& layer : unet_layers(cfg)) {
    pc.per_layer.emplace_back(layer.name, layer.param_count());
    pc.total += layer.param_count();
  }
  return pc;
}

std::string config_hash(const UNetConfig& cfg) {
  const std::string text = config_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

WeightStore::WeightStore(UNetConfig cfg, std::map<std::string, NamedTensor> entries)
    : config_(std::move(cfg)), entries_(std::move(entries)), hash_(airad::config_hash(config_)) {}

WeightStore WeightStore::random(const UNetConfig& cfg, std::uint64_t seed) {
  NormalStream normal(seed);
  std::map<std::string, NamedTensor> entries;
  for (const auto& layer : unet_layers(cfg)) {
    NamedTensor w{layer.weight_shape(), std::vector<float>(layer.weight_count())};
    const auto& s = w.shape;
    const std::size_t fan_in = layer.kind == LayerKind::UpConv2x2 ? s[0] * s[2] * s[3] : s[1] * s[2] * s[3];
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (float& v : w.values) v = static_cast<float>(normal.next() * stddev);
    entries.emplace(layer.name + ".weight", std::move(w));
    entries.emplace(layer.name + ".bias", NamedTensor{{layer.out_channels}, std::vector<float>(layer.out_channels, 0.0f)});
  }
  return WeightStore(cfg, std::move(entries));
}

WeightStore WeightStore::constant(const UNetConfig& cfg, float weight, float bias) {
  std::map<std::string, NamedTensor> entries;
  for (const auto& layer : unet_layers(cfg)) {
    entries.emplace(layer.name + ".weight", NamedTensor{layer.weight_shape(), std::vector<float>(layer.weight_count(), weight)});
    entries.emplace(layer.name + ".bias", NamedTensor{{layer.out_channels}, std::vector<float>(layer.out_channels, bias)});
  }
  return WeightStore(cfg, std::move(entries));
}

void WeightStore::validate() const {
  std::size_t expected = 0;
  for (const auto& layer : unet_layers(config_)) {
    const std::pair<std::string, std::vector<std::size_t>> required[] = {
        {layer.name + ".weight", layer.weight_shape()}, {layer.name + ".bias", {layer.out_channels}}};
    for (const auto& [name, shape] : required) {
      const auto it = entries_.find(name);
      if (it == entries_.end()) throw Error(ErrorCode::MissingWeights, "missing tensor " + name);
      if (it->second.shape != shape) throw Error(ErrorCode::ShapeMismatch, "tensor " + name + " has the wrong shape");
      std::size_t n = 1;
      for (std::size_t d : shape) n *= d;
      if (it->second.values.size() != n) throw Error(ErrorCode::ShapeMismatch, "tensor " + name + " has the wrong length");
      ++expected;
    }
  }
  if (entries_.size() != expected) throw Error(ErrorCode::ShapeMismatch, "weight store has tensors the config does not use");
}

std::span<const float> WeightStore::get(const std::string& name) const {
  const auto it = entries_.find(name);
  if (it == entries_.end()) throw Error(ErrorCode::MissingWeights, "missing tensor " + name);
  return it->second.values;
}

void WeightStore::save(const std::filesystem::path& path) const {
  nlohmann::json manifest;
  manifest["format"] = "UNETW1";
  manifest["config"] = config_json(config_);
  manifest["config_hash"] = hash_;
  manifest["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : entries_) {
    const std::size_t nbytes = t.values.size() * sizeof(float);
    manifest["tensors"].push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
  }
  const std::string text = manifest.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  f.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : entries_)
    f.write(reinterpret_cast<const char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * sizeof(float)));
  if (!f) throw Error(ErrorCode::IoFailure, "write error in " + path.string());
}

bool WeightStore::has_magic(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  char buf[sizeof(kMagic)] = {};
  f.read(buf, sizeof(buf));
  return f && std::memcmp(buf, kMagic, sizeof(kMagic)) == 0;
}

WeightStore WeightStore::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::ModelLoadError, "cannot open " + path.string());
  char magic[sizeof(kMagic)] = {};
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorCode::ModelLoadError, path.string() + " is not a UNETW1 weight file");
  std::uint64_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!f || len > (1ull << 30)) throw Error(ErrorCode::ModelLoadError, "bad manifest length");
  std::string text(len, '\0');
  f.read(text.data(), static_cast<std::streamsize>(len));
  if (!f) throw Error(ErrorCode::ModelLoadError, "truncated manifest");
  const std::vector<char> blob{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};

  try {
    const auto manifest = nlohmann::json::parse(text);
    const UNetConfig cfg = config_from(manifest.at("config"));
    if (manifest.contains("config_hash") && manifest.at("config_hash").get<std::string>() != airad::config_hash(cfg))
      throw Error(ErrorCode::ModelLoadError, "config hash does not match the embedded config");
    std::map<std::string, NamedTensor> entries;
    for (const auto& t : manifest.at("tensors")) {
      NamedTensor nt;
      nt.shape = t.at("shape").get<std::vector<std::size_t>>();
      const auto offset = t.at("offset").get<std::size_t>();
      const auto nbytes = t.at("nbytes").get<std::size_t>();
      if (nbytes % sizeof(float) != 0 || offset > blob.size() || blob.size() - offset < nbytes)
        throw Error(ErrorCode::ModelLoadError, "tensor data out of range");
      nt.values.resize(nbytes / sizeof(float));
      std::memcpy(nt.values.data(), blob.data() + offset, nbytes);
      entries.emplace(t.at("name").get<std::string>(), std::move(nt));
    }
    WeightStore store(cfg, std::move(entries));
    store.validate();
    return store;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ModelLoadError, std::string("weight manifest: ") + e.what());
  }
}

Tensor stack_to_tensor(const SliceStack& stack) {
  Tensor t(stack.channels.size(), stack.height, stack.width);
  for (std::size_t c = 0; c < stack.channels.size(); ++c) {
    const Image2& img = stack.channels[c];
    if (img.width != stack.width || img.height != stack.height)
      throw Error(ErrorCode::ShapeMismatch, "stack channel size differs from stack shape");
    std::memcpy(t.plane(c), img.pixels.data(), img.pixels.size() * sizeof(float));
  }
  return t;
}

ProbabilityMap forward(const SliceStack& stack, const UNetConfig& cfg, const WeightStore& weights) {
  if (!(cfg == weights.config())) throw Error(ErrorCode::ShapeMismatch, "weights were built for a different config");
  return forward(stack, weights);
}

ProbabilityMap forward(const SliceStack& stack, const WeightStore& weights) {
  const UNetConfig& cfg = weights.config();
  const auto& ch = cfg.channels_per_level;
  if (stack.channels.size() != cfg.in_channels)
    throw Error(ErrorCode::ShapeMismatch, "stack has " + std::to_string(stack.channels.size()) +
                                              " channels, network expects " + std::to_string(cfg.in_channels));
  const std::size_t div = std::size_t{1} << (cfg.levels - 1);
  if (stack.height % div || stack.width % div || stack.height == 0 || stack.width == 0)
    throw Error(ErrorCode::ShapeMismatch, "spatial dims must be divisible by " + std::to_string(div));

  auto conv3 = [&](const Tensor& x, const std::string& name, std::size_t out, bool relu) {
    const ConvSpec spec{x.channels, out, 3, 1, 1, true};
    return conv2d(x, spec, weights.get(name + ".weight"), weights.get(name + ".bias"), relu);
  };

  Tensor x = stack_to_tensor(stack);
  std::vector<Tensor> skips;
  for (std::size_t l = 0; l < cfg.levels; ++l) {
    const std::string p = "enc" + std::to_string(l);
    x = conv3(x, p + ".conv1", ch[l], true);
    x = conv3(x, p + ".conv2", ch[l], true);
    if (l + 1 < cfg.levels) {
      skips.push_back(x);
      x = max_pool2x2(x);
    }
  }
  for (std::size_t l = cfg.levels - 1; l-- > 0;) {
    const std::string p = "dec" + std::to_string(l);
    if (cfg.upsample_mode == UpsampleMode::TransposedConv) {
      x = conv_transpose2x2(x, ch[l], weights.get(p + ".up.weight"), weights.get(p + ".up.bias"));
    } else {
      x = conv3(upsample_bilinear2x(x), p + ".up", ch[l], false);
    }
    x = concat_channels(skips[l], x);
    skips[l] = Tensor{};
    x = conv3(x, p + ".conv1", ch[l], true);
    x = conv3(x, p + ".conv2", ch[l], true);
  }
  const ConvSpec head{ch[0], cfg.out_channels, 1, 0, 1, true};
  x = conv2d(x, head, weights.get("head.weight"), weights.get("head.bias"));

  ProbabilityMap out;
  out.target_index = stack.target_index;
  out.values = Image2(stack.width, stack.height);
  const float* logits = x.plane(0);
  for (std::size_t i = 0; i < out.values.pixels.size(); ++i) out.values.pixels[i] = open_sigmoid(logits[i]);
  return out;
}

LabelMask segment_slicewise(const Volume& v, const WeightStore& weights, float threshold, const SliceProgress& progress) {
  const std::size_t k = weights.config().context_k();
  LabelMask mask(v.dims);
  mask.copy_meta_from(v);
  for (std::size_t z = 0; z < v.dims.nz; ++z) {
    const ProbabilityMap p = forward(assemble_stack(v, k, z), weights);
    std::uint8_t* dst = mask.slice(z);
    for (std::size_t i = 0; i < p.values.pixels.size(); ++i) dst[i] = p.values.pixels[i] >= threshold ? 1 : 0;
    if (progress) progress(z + 1, v.dims.nz);
  }
  return mask;
}

}  // namespace airad
