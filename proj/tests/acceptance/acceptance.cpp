// Acceptance run: one PASS/FAIL line per criterion, each against its time budget.
// Exits nonzero when any criterion fails.

#include <airad/cascade.hpp>
#include <airad/job.hpp>
#include <airad/mesh.hpp>
#include <airad/metrics.hpp>
#include <airad/nifti.hpp>
#include <airad/phantom.hpp>
#include <airad/preprocess.hpp>
#include <airad/tiff.hpp>
#include <airad/train_utils.hpp>
#include <airad/unet.hpp>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "generators.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

namespace {

using namespace airad;
using testing::Rng;

struct Outcome {
  bool ok = true;
  std::string detail;
};

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<double>& b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Outcome parameter_counts() {
  UNetConfig wide;
  wide.channels_per_level = {64, 128, 256, 512, 1024};
  const std::size_t deep = param_count(UNetConfig{}).of("enc4.conv2");
  const std::size_t deep_wide = param_count(wide).of("enc4.conv2");
  return {deep == 2'359'808 && deep_wide == 9'438'208, fmt("512-wide %zu, 1024-wide %zu", deep, deep_wide)};
}

Outcome clip_standardize() {
  Rng rng(1);
  Volume v = testing::random_volume(rng, {100, 100, 100}, -2000.0f, 3000.0f);
  const Volume s = standardize_range(clip_intensities(v, -100.0f, 400.0f));
  double worst = 0.0;
  for (std::size_t i = 0; i < v.voxels.size(); ++i) {
    const float shortcut = (std::clamp(v.voxels[i], -100.0f, 400.0f) + 100.0f) / 500.0f;
    worst = std::max(worst, static_cast<double>(std::abs(s.voxels[i] - shortcut)));
  }
  return {worst == 0.0, fmt("1e6 voxels, max abs diff %g", worst)};
}

Outcome forward_contract() {
  Rng rng(2);
  const WeightStore w = WeightStore::random(UNetConfig{}, 3);
  const ProbabilityMap p = forward(testing::random_stack(rng, 5, 256, 256), w);
  bool open = p.values.width == 256 && p.values.height == 256;
  float lo = 1.0f, hi = 0.0f;
  for (float x : p.values.pixels) {
    open = open && x > 0.0f && x < 1.0f;
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  double worst = 0.0;
  for (UpsampleMode mode : {UpsampleMode::TransposedConv, UpsampleMode::BilinearThenConv}) {
    UNetConfig toy;
    toy.levels = 2;
    toy.channels_per_level = {2, 4};
    toy.in_channels = 3;
    toy.upsample_mode = mode;
    auto entries = WeightStore::random(toy, 4).entries();
    for (auto& [name, t] : entries)
      if (name.ends_with(".bias")) t.values = testing::random_floats(rng, t.values.size(), 0.5f);
    const WeightStore tw(toy, entries);
    for (int trial = 0; trial < 5; ++trial) {
      const SliceStack s = testing::random_stack(rng, 3, 8 + 4 * trial, 8 + 4 * trial);
      worst = std::max(worst, max_abs_diff(forward(s, tw).values.pixels, testing::naive_unet_forward(s, tw)));
    }
  }
  return {open && worst <= 1e-5, fmt("256x256 range [%.4g, %.4g]; toy vs naive graph %.2g", lo, hi, worst)};
}

Outcome conv_oracle() {
  Rng rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ConvSpec spec;
    spec.in_channels = testing::uniform_size(rng, 1, 6);
    spec.out_channels = testing::uniform_size(rng, 1, 8);
    spec.kernel = std::array<std::size_t, 3>{1, 3, 5}[testing::uniform_size(rng, 0, 2)];
    spec.padding = testing::uniform_size(rng, 0, spec.kernel / 2);
    spec.stride = testing::uniform_size(rng, 1, 2);
    const Tensor in = testing::random_tensor(rng, spec.in_channels, testing::uniform_size(rng, spec.kernel, 16),
                                             testing::uniform_size(rng, spec.kernel, 16));
    const auto w = testing::random_floats(rng, spec.weight_count());
    const auto b = testing::random_floats(rng, spec.out_channels);
    worst = std::max(worst, max_abs_diff(conv2d(in, spec, w, b).data, testing::brute_conv2d(in, spec, w, b)));
  }
  return {worst < 1e-5, fmt("100 cases, max abs diff %.2g", worst)};
}

Outcome metrics_oracle() {
  Rng rng(6);
  double worst = 0.0;
  bool identities = true, defined_match = true;
  for (int trial = 0; trial < 50; ++trial) {
    const Dims d = testing::random_dims(rng, 2, 16);
    const Spacing sp = testing::random_spacing(rng);
    LabelMask g = testing::random_blob_mask(rng, d, testing::uniform_size(rng, 1, 4));
    LabelMask p = (trial % 3 == 0) ? testing::random_blob_mask(rng, d, 3) : g;
    for (std::size_t k = testing::uniform_size(rng, 0, d.count() / 6); k > 0; --k)
      p.voxels[testing::uniform_size(rng, 0, d.count() - 1)] ^= 1;
    if (!count_nonzero(g)) g.voxels[0] = 1;
    if (!count_nonzero(p)) p.voxels[d.count() - 1] = 1;
    g.set_spacing(sp);
    p.set_spacing(sp);

    const OverlapMetrics o = overlap_metrics(p, g);
    const testing::BruteOverlap bo = testing::brute_overlap(p, g);
    defined_match = defined_match && o.rvd.has_value() == bo.rvd_defined;
    worst = std::max({worst, std::abs(o.dice - bo.dice), std::abs(o.iou - bo.iou),
                      o.rvd ? std::abs(*o.rvd - bo.rvd) : 0.0});
    const SurfaceDistances s = surface_distances(p, g);
    const SurfaceDistances bs = testing::brute_surface_distances(p, g);
    worst = std::max({worst, std::abs(s.asd - bs.asd), std::abs(s.rmsd - bs.rmsd), std::abs(s.hd - bs.hd),
                      std::abs(s.hd95 - bs.hd95)});
    identities = identities && std::abs(o.iou - o.dice / (2.0 - o.dice)) <= 1e-12 && s.hd95 <= s.hd;
  }
  return {worst <= 1e-9 && identities && defined_match,
          fmt("50 pairs, max deviation %.2g; Dice-Jaccard and hd95 <= hd %s", worst, identities ? "hold" : "VIOLATED")};
}

Outcome fold_aggregation() {
  const std::vector<double> dice{98.09, 98.16, 98.12, 98.08, 98.16};
  const MeanSd sample = mean_sd(dice, SdKind::Sample);
  const MeanSd population = mean_sd(dice, SdKind::Population);
  const std::string s = format_mean_sd(sample), p = format_mean_sd(population);
  const bool ok = s == "98.12 (0.04)" || p == "98.12 (0.04)";
  return {ok, fmt("sample SD %.4f -> \"%s\", population SD %.4f -> \"%s\"; %s matches", sample.sd, s.c_str(),
                  population.sd, p.c_str(), s == "98.12 (0.04)" ? "sample" : "population")};
}

LabelMask ball(std::size_t n, double radius) {
  LabelMask m({n, n, n});
  const double c = (static_cast<double>(n) - 1) / 2;
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = x - c, dy = y - c, dz = z - c;
        m.at(x, y, z) = dx * dx + dy * dy + dz * dz <= radius * radius;
      }
  return m;
}

Outcome mesh_geometry() {
  const double expected = 4 * std::numbers::pi * 20.0 * 20.0;
  const double area = surface_area(marching_cubes(ball(45, 20.0)));
  const double rel = (area - expected) / expected;
  Rng rng(7);
  int closed = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Dims d = testing::random_dims(rng, 2, 14);
    LabelMask m = (trial % 2) ? testing::random_mask(rng, d, 0.4) : testing::random_blob_mask(rng, d, 3);
    if (!count_nonzero(m)) m.voxels[0] = 1;
    m.set_spacing(testing::random_spacing(rng));
    closed += open_or_nonmanifold_edges(marching_cubes(m)) == 0;
  }
  return {std::abs(rel) <= 0.03 && closed == 20,
          fmt("sphere r=20 area %.2f vs %.1f (%+.2f%%, limit 3%%); %d/20 random masks watertight", area, expected,
              100 * rel, closed)};
}

Outcome obj_merge_anchor() {
  constexpr std::size_t kLiverVertices = 1'380'160;
  TissueMesh liver = marching_cubes(ball(40, 17.0));
  liver.material = "liver";
  while (liver.vertices.size() < kLiverVertices) {
    const double t = static_cast<double>(liver.vertices.size());
    liver.vertices.push_back({std::fmod(t, 97.0), std::fmod(t, 89.0), std::fmod(t, 83.0)});
    liver.normals.push_back({0.0, 0.0, 1.0});
  }
  liver = assign_texcoords(std::move(liver));
  TissueMesh tumor = assign_texcoords(marching_cubes(ball(9, 3.0)));
  tumor.material = "tumor";
  const SceneDocument doc = merge_scene({liver, tumor});

  std::uint64_t first = UINT64_MAX;
  for (const auto& f : doc.objects[1].faces)
    for (const auto& c : f) first = std::min<std::uint64_t>(first, c.v + 1);

  testing::TempDir dir("acceptance-obj");
  write_obj_mtl(doc, dir / "complete_model.obj", dir / "complete_model.mtl");
  const SceneDocument back = parse_obj(dir / "complete_model.obj", dir / "complete_model.mtl");
  const bool restored = scenes_close(doc, back, 1e-6) && back.objects.size() == 2;
  return {liver.vertices.size() == kLiverVertices && first >= kLiverVertices + 1 && restored,
          fmt("liver %zu vertices, first tumor face index %llu; round trip %s", liver.vertices.size(),
              static_cast<unsigned long long>(first), restored ? "restores both objects" : "FAILED")};
}

Outcome end_to_end_phantom() {
  const PhantomSpec spec = default_phantom_spec(64);
  const Phantom clean = generate_phantom(spec, 1, "clean");
  const OracleBindings o = oracle_bindings(spec);
  CascadeConfig cfg;
  cfg.liver_model = o.liver;
  cfg.tumor_model = o.tumor;
  cfg.vessel_model = o.vessel;
  cfg.preprocess.rescale_factor = 1.0;
  const CascadeResult r = run_cascade(clean.volume, cfg);
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < r.merged.voxels.size(); ++i) mismatched += r.merged.voxels[i] != clean.truth.voxels[i];
  const double liver_dice = overlap_metrics(r.liver, nonzero_mask(clean.truth)).dice;

  // Noisy volume through a mini U-Net liver model with random weights.
  testing::TempDir dir("acceptance-e2e");
  PhantomSpec noisy_spec = spec;
  noisy_spec.noise = 8.0f;
  write_nifti(generate_phantom(noisy_spec, 2, "noisy").volume, dir / "noisy.nii.gz", true);
  UNetConfig mini;
  mini.levels = 3;
  mini.channels_per_level = {4, 8, 16};
  mini.in_channels = 5;
  WeightStore::random(mini, 11).save(dir / "mini.unetw");
  JobRequest req;
  req.volumes = {dir / "noisy.nii.gz"};
  req.config.liver_model = ModelBinding::from_file(dir / "mini.unetw");
  req.config.tumor_model = o.tumor;
  req.config.vessel_model = o.vessel;
  req.out_dir = dir / "out";
  Job job(new_job_id(), req);
  const bool job_ok = run_job(job);
  std::size_t files = 0;
  for (const char* f : kBundleFiles) files += std::filesystem::exists(dir / "out/noisy" / f);
  const auto status = job.volumes();
  return {mismatched == 0 && liver_dice == 1.0 && job_ok && files == 5,
          fmt("oracle cascade: %zu mismatched voxels, liver Dice %.4f; mini U-Net job %s, %zu/5 files%s", mismatched,
              liver_dice, job_ok ? "done" : "failed", files,
              status[0].error ? (" (" + *status[0].error + ")").c_str() : "")};
}

Outcome scheduler_traces() {
  OneCycleState oc;
  oc.max_lr = 24e-5f;
  oc.total_steps = 1000;
  float peak = 0.0f;
  std::size_t argmax = 0;
  bool bounded = true;
  for (std::size_t t = 0; t <= oc.total_steps; ++t) {
    const float lr = onecycle_lr(oc, t);
    bounded = bounded && lr <= oc.max_lr;
    if (lr > peak) {
      peak = lr;
      argmax = t;
    }
  }
  const bool exact_peak = onecycle_lr(oc, oc.peak_step()) == oc.max_lr && argmax == oc.peak_step();

  PlateauState ps;
  ps.lr = 16e-5f;
  std::vector<float> trace;
  for (int epoch = 0; epoch < 40; ++epoch) {
    ps = plateau_step(ps, 0.25);
    trace.push_back(ps.lr);
  }
  bool non_increasing = true;
  for (std::size_t i = 1; i < trace.size(); ++i) non_increasing = non_increasing && trace[i] <= trace[i - 1];
  // The first epoch sets the best value; the cut lands after patience + 1 stalls.
  const std::size_t drop = ps.patience + 1;
  const double ratio = static_cast<double>(trace[drop]) / trace[drop - 1];
  const bool cut = trace[drop - 1] == 16e-5f && std::abs(ratio - 0.1) <= 1e-6;
  return {bounded && exact_peak && non_increasing && cut,
          fmt("OneCycle peak %.3g at step %zu of 1000, bounded %s; plateau ratio %.6f at epoch %zu", peak, argmax,
              bounded ? "yes" : "NO", ratio, drop + 1)};
}

Outcome io_round_trips() {
  Rng rng(9);
  testing::TempDir dir("acceptance-io");
  int exact = 0;
  for (int trial = 0; trial < 20; ++trial) {
    Volume v(testing::random_dims(rng, 1, 40));
    for (float& x : v.voxels) x = std::bit_cast<float>(static_cast<std::uint32_t>(rng()) & 0xBF7FFFFFu);
    v.set_spacing(testing::random_spacing(rng));
    bool ok = true;
    for (bool gz : {false, true}) {
      const auto path = dir / (std::to_string(trial) + (gz ? ".nii.gz" : ".nii"));
      write_nifti(v, path, gz);
      const Volume back = read_nifti(path);
      ok = ok && back.dims == v.dims &&
           std::equal(v.voxels.begin(), v.voxels.end(), back.voxels.begin(), back.voxels.end(),
                      [](float a, float b) { return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b); });
    }
    std::vector<Image2> slices;
    for (std::size_t z = 0; z < v.dims.nz; ++z) slices.push_back(slice_image(v, z));
    write_tiff_stack(slices, dir / (std::to_string(trial) + ".tif"));
    ok = ok && read_tiff_stack(dir / (std::to_string(trial) + ".tif")) == slices;
    exact += ok;
  }
  return {exact == 20, fmt("%d/20 volumes bit-exact through .nii, .nii.gz and multi-page TIFF", exact)};
}

}  // namespace

int main() {
  const Criterion criteria[] = {
      {"parameter-count anchor", 1, parameter_counts},
      {"clip/standardize equivalence", 5, clip_standardize},
      {"forward-pass contract", 60, forward_contract},
      {"conv2d oracle", 30, conv_oracle},
      {"metrics oracle", 60, metrics_oracle},
      {"fold aggregation anchor", 1, fold_aggregation},
      {"mesh geometry", 60, mesh_geometry},
      {"OBJ merge anchor", 30, obj_merge_anchor},
      {"end-to-end phantom", 120, end_to_end_phantom},
      {"scheduler traces", 1, scheduler_traces},
      {"I/O round-trips", 30, io_round_trips},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = out.ok && s <= c.budget_s;
    failures += !pass;
    std::printf("%s  %-30s %s [%.2f s, budget %.0f s]\n", pass ? "PASS" : "FAIL", c.name, out.detail.c_str(), s,
                c.budget_s);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
  return failures ? 1 : 0;
}
