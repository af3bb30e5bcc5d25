#include "airad/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

namespace airad {
namespace {

using Vec = std::array<double, 3>;

double sq(double v) { return v * v; }

bool in_ellipsoid(const Ellipsoid& e, const Vec& p) {
  return sq((p[0] - e.center[0]) / e.radii[0]) + sq((p[1] - e.center[1]) / e.radii[1]) +
             sq((p[2] - e.center[2]) / e.radii[2]) <=
         1.0;
}

bool in_sphere(const Sphere& s, const Vec& p) {
  return sq(p[0] - s.center[0]) + sq(p[1] - s.center[1]) + sq(p[2] - s.center[2]) <= sq(s.radius);
}

bool in_tube(const Tube& t, const Vec& p) {
  Vec ab{}, ap{};
  double len2 = 0.0, proj = 0.0;
  for (int i = 0; i < 3; ++i) {
    ab[i] = t.b[i] - t.a[i];
    ap[i] = p[i] - t.a[i];
    len2 += ab[i] * ab[i];
    proj += ab[i] * ap[i];
  }
  const double u = len2 > 0 ? std::clamp(proj / len2, 0.0, 1.0) : 0.0;
  double d2 = 0.0;
  for (int i = 0; i < 3; ++i) d2 += sq(ap[i] - u * ab[i]);
  return d2 <= sq(t.radius);
}

// Smooth texture in [0, 1] so each tissue spans its band without noise.
double texture(const Vec& p) {
  return 0.5 + 0.5 * std::sin(0.37 * p[0] + 0.23 * p[1]) * std::cos(0.29 * p[2] - 0.11 * p[0]);
}

nlohmann::json band_json(const IntensityBand& b) { return {b.lo, b.hi}; }
IntensityBand band_from(const nlohmann::json& j) { return {j.at(0).get<float>(), j.at(1).get<float>()}; }

template <typename F>
void for_each_voxel(const PhantomSpec& spec, F&& fn) {
  for (std::size_t z = 0; z < spec.dims.nz; ++z)
    for (std::size_t y = 0; y < spec.dims.ny; ++y)
      for (std::size_t x = 0; x < spec.dims.nx; ++x)
        fn(x + spec.dims.nx * (y + spec.dims.ny * z),
           Vec{static_cast<double>(x) * spec.spacing[0], static_cast<double>(y) * spec.spacing[1],
               static_cast<double>(z) * spec.spacing[2]});
}

}  // namespace

void PhantomSpec::validate() const {
  if (dims.empty()) throw Error(ErrorCode::InvalidSpec, "phantom grid is empty");
  for (double s : spacing)
    if (!(s > 0)) throw Error(ErrorCode::InvalidSpec, "phantom spacing must be positive");
  for (double r : liver.radii)
    if (!(r > 0)) throw Error(ErrorCode::InvalidSpec, "liver radii must be positive");
  for (const auto& t : tumors)
    if (!(t.radius > 0)) throw Error(ErrorCode::InvalidSpec, "tumor radius must be positive");
  for (const auto& v : vessels)
    if (!(v.radius > 0)) throw Error(ErrorCode::InvalidSpec, "vessel radius must be positive");
  const IntensityBand bands[3] = {liver_band, tumor_band, vessel_band};
  const char* names[3] = {"liver", "tumor", "vessel"};
  for (int i = 0; i < 3; ++i) {
    if (!(bands[i].lo <= bands[i].hi)) throw Error(ErrorCode::InvalidSpec, std::string(names[i]) + " band is inverted");
    if (bands[i].contains(background))
      throw Error(ErrorCode::SpecOverlap, std::string(names[i]) + " band contains the background intensity");
    for (int j = i + 1; j < 3; ++j)
      if (bands[i].overlaps(bands[j]))
        throw Error(ErrorCode::SpecOverlap, std::string(names[i]) + " and " + names[j] + " intensity bands intersect");
  }
  if (noise < 0) throw Error(ErrorCode::InvalidSpec, "noise amplitude must be non-negative");
  // Lesions must sit inside the organ at every sampled grid point.
  bool escaped = false;
  for_each_voxel(*this, [&](std::size_t, const Vec& p) {
    if (escaped || in_ellipsoid(liver, p)) return;
    for (const auto& t : tumors) escaped = escaped || in_sphere(t, p);
    for (const auto& v : vessels) escaped = escaped || in_tube(v, p);
  });
  if (escaped) throw Error(ErrorCode::InvalidSpec, "tumor or vessel geometry extends outside the liver");
}

std::string PhantomSpec::to_json() const {
  nlohmann::json j;
  j["dims"] = {dims.nx, dims.ny, dims.nz};
  j["spacing"] = spacing;
  j["liver"] = {{"center", liver.center}, {"radii", liver.radii}, {"band", band_json(liver_band)}};
  j["tumors"] = {{"band", band_json(tumor_band)}, {"spheres", nlohmann::json::array()}};
  for (const auto& t : tumors) j["tumors"]["spheres"].push_back({{"center", t.center}, {"radius", t.radius}});
  j["vessels"] = {{"band", band_json(vessel_band)}, {"tubes", nlohmann::json::array()}};
  for (const auto& v : vessels) j["vessels"]["tubes"].push_back({{"a", v.a}, {"b", v.b}, {"radius", v.radius}});
  j["background"] = background;
  j["noise"] = noise;
  return j.dump(2);
}

PhantomSpec PhantomSpec::from_json(const std::string& text) {
  PhantomSpec s;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto d = j.at("dims").get<std::array<std::size_t, 3>>();
    s.dims = {d[0], d[1], d[2]};
    if (j.contains("spacing")) s.spacing = j.at("spacing").get<Spacing>();
    const auto& l = j.at("liver");
    s.liver.center = l.at("center").get<Vec>();
    s.liver.radii = l.at("radii").get<Vec>();
    if (l.contains("band")) s.liver_band = band_from(l.at("band"));
    if (j.contains("tumors")) {
      const auto& t = j.at("tumors");
      if (t.contains("band")) s.tumor_band = band_from(t.at("band"));
      for (const auto& e : t.value("spheres", nlohmann::json::array()))
        s.tumors.push_back({e.at("center").get<Vec>(), e.at("radius").get<double>()});
    }
    if (j.contains("vessels")) {
      const auto& v = j.at("vessels");
      if (v.contains("band")) s.vessel_band = band_from(v.at("band"));
      for (const auto& e : v.value("tubes", nlohmann::json::array()))
        s.vessels.push_back({e.at("a").get<Vec>(), e.at("b").get<Vec>(), e.at("radius").get<double>()});
    }
    s.background = j.value("background", s.background);
    s.noise = j.value("noise", s.noise);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidSpec, std::string("phantom spec: ") + e.what());
  }
  s.validate();
  return s;
}

PhantomSpec default_phantom_spec(std::size_t n) {
  if (n < 16) throw Error(ErrorCode::InvalidSpec, "default phantom needs at least 16 voxels per side");
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  const double u = static_cast<double>(n) / 64.0;
  PhantomSpec s;
  s.dims = {n, n, n};
  s.liver = {{c, c, c}, {26.0 * u, 20.0 * u, 18.0 * u}};
  s.tumors = {{{c - 9.0 * u, c + 4.0 * u, c}, 5.0 * u}, {{c + 10.0 * u, c - 5.0 * u, c + 3.0 * u}, 3.5 * u}};
  s.vessels = {{{c - 16.0 * u, c - 8.0 * u, c - 6.0 * u}, {c + 16.0 * u, c + 8.0 * u, c + 6.0 * u}, 2.0 * u}};
  return s;
}

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed, std::string source_id) {
  spec.validate();
  Phantom out;
  out.volume = Volume(spec.dims, spec.background);
  out.volume.set_spacing(spec.spacing);
  out.volume.source_id = source_id;
  out.truth = LabelMask(spec.dims, 0);
  out.truth.set_spacing(spec.spacing);
  out.truth.source_id = std::move(source_id);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for_each_voxel(spec, [&](std::size_t i, const Vec& p) {
    std::uint8_t label = 0;
    if (in_ellipsoid(spec.liver, p)) {
      label = 1;
      for (const auto& t : spec.tumors)
        if (in_sphere(t, p)) label = 2;
      for (const auto& v : spec.vessels)
        if (in_tube(v, p)) label = 3;
    }
    out.truth.voxels[i] = label;
    float value = spec.background;
    if (label) {
      const IntensityBand& b = label == 1 ? spec.liver_band : label == 2 ? spec.tumor_band : spec.vessel_band;
      value = b.lo + static_cast<float>(texture(p)) * (b.hi - b.lo);
      value = std::clamp(value, b.lo, b.hi);
    }
    // One draw per voxel keeps the stream aligned whatever the noise level.
    const double n = unit(rng);
    if (spec.noise > 0) value += static_cast<float>(n * spec.noise);
    out.volume.voxels[i] = value;
  });
  return out;
}

OracleBindings oracle_bindings(const PhantomSpec& spec) {
  auto threshold = [](float lo, float hi) {
    ModelBinding b;
    b.kind = ModelBinding::Kind::Threshold;
    b.lo = lo;
    b.hi = hi;
    return b;
  };
  const float lo = std::min({spec.liver_band.lo, spec.tumor_band.lo, spec.vessel_band.lo});
  const float hi = std::max({spec.liver_band.hi, spec.tumor_band.hi, spec.vessel_band.hi});
  if (spec.background >= lo && spec.background <= hi)
    throw Error(ErrorCode::SpecOverlap, "background lies between tissue bands; no single liver threshold exists");
  return {threshold(lo, hi), threshold(spec.tumor_band.lo, spec.tumor_band.hi),
          threshold(spec.vessel_band.lo, spec.vessel_band.hi)};
}

}  // namespace airad
