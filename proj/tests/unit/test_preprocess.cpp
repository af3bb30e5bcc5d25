#include <airad/preprocess.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "generators.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

namespace airad {
namespace {

using testing::Rng;

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

Volume with_affine(Volume v, const Affine& a) {
  v.affine = a;
  return v;
}

// For every voxel of `out`, finds the source voxel at the same world position
// by exhaustive search and checks that the values agree.
void expect_world_preserved(const Volume& src, const Volume& out) {
  ASSERT_EQ(src.voxels.size(), out.voxels.size());
  for (std::size_t k = 0; k < out.dims.nz; ++k)
    for (std::size_t j = 0; j < out.dims.ny; ++j)
      for (std::size_t i = 0; i < out.dims.nx; ++i) {
        const auto w = out.affine.apply(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
        bool found = false;
        for (std::size_t c = 0; c < src.dims.nz && !found; ++c)
          for (std::size_t b = 0; b < src.dims.ny && !found; ++b)
            for (std::size_t a = 0; a < src.dims.nx && !found; ++a) {
              const auto s = src.affine.apply(static_cast<double>(a), static_cast<double>(b), static_cast<double>(c));
              if (std::abs(s[0] - w[0]) < 1e-4 && std::abs(s[1] - w[1]) < 1e-4 && std::abs(s[2] - w[2]) < 1e-4) {
                EXPECT_EQ(out.at(i, j, k), src.at(a, b, c));
                found = true;
              }
            }
        ASSERT_TRUE(found) << "no source voxel at the world position of " << i << "," << j << "," << k;
      }
}

TEST(Reorient, CanonicalVolumeIsUnchanged) {
  Rng rng(1);
  Volume v = testing::random_volume(rng, Dims{5, 4, 3}, 0, 1);
  v.set_spacing({0.7, 0.8, 2.0});
  const Volume r = reorient_canonical(v);
  EXPECT_EQ(r.voxels, v.voxels);
  EXPECT_EQ(r.affine, v.affine);
}

TEST(Reorient, FlipInXMirrorsAndIsIdempotent) {
  Rng rng(2);
  Affine a = Affine::diagonal({1, 1, 1});
  a.m[0][0] = -1;
  a.m[0][3] = 4;
  const Volume v = with_affine(testing::random_volume(rng, Dims{5, 3, 2}, 0, 1), a);
  const Volume once = reorient_canonical(v);
  for (std::size_t z = 0; z < 2; ++z)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t x = 0; x < 5; ++x) EXPECT_EQ(once.at(x, y, z), v.at(4 - x, y, z));
  const Volume twice = reorient_canonical(once);
  EXPECT_EQ(twice.voxels, once.voxels);
  EXPECT_EQ(twice.affine, once.affine);
}

TEST(Reorient, LpsVolumeFlipsXAndYPreservingWorldPositions) {
  Rng rng(3);
  Affine lps;
  lps.m = {{{-0.8, 0, 0, 120.0}, {0, -0.7, 0, 95.5}, {0, 0, 2.5, -40.0}}};
  Volume v = with_affine(testing::random_volume(rng, Dims{6, 5, 4}, -100, 400), lps);
  v.spacing = {0.8, 0.7, 2.5};
  const Volume r = reorient_canonical(v);
  EXPECT_EQ(r.at(0, 0, 0), v.at(5, 4, 0));
  for (int a = 0; a < 3; ++a) EXPECT_GT(r.affine.m[a][a], 0.0);
  expect_world_preserved(v, r);
}

TEST(Reorient, AxisPermutationPreservesWorldPositions) {
  Rng rng(4);
  Affine perm;
  perm.m = {{{0, 0, 1.5, -3}, {-2.0, 0, 0, 10}, {0, 1.0, 0, 7}}};
  Volume v = with_affine(testing::random_volume(rng, Dims{4, 3, 5}, 0, 1), perm);
  v.spacing = {2.0, 1.0, 1.5};
  const Volume r = reorient_canonical(v);
  EXPECT_EQ(r.dims, (Dims{5, 4, 3}));
  EXPECT_NEAR(r.spacing[0], 1.5, 1e-12);
  expect_world_preserved(v, r);
}

TEST(Reorient, ObliqueAffineIsRejected) {
  Affine oblique;
  const double c = std::cos(0.3), s = std::sin(0.3);
  oblique.m = {{{c, -s, 0, 0}, {s, c, 0, 0}, {0, 0, 1, 0}}};
  const Volume v = with_affine(Volume(Dims{2, 2, 2}), oblique);
  EXPECT_EQ(code_of([&] { reorient_canonical(v); }), ErrorCode::ObliqueAffine);
}

TEST(Reorient, UndoRestoresSourceGrid) {
  Rng rng(5);
  Affine a;
  a.m = {{{0, -1, 0, 0}, {0, 0, 1, 0}, {-1, 0, 0, 0}}};
  LabelMask m = testing::random_mask(rng, Dims{4, 5, 6}, 0.5);
  m.affine = a;
  const Reorientation plan = plan_reorientation(m.affine, m.dims, m.spacing);
  const LabelMask there = apply_reorientation(m, plan);
  const LabelMask back = undo_reorientation(there, plan);
  EXPECT_EQ(back.dims, m.dims);
  EXPECT_EQ(back.voxels, m.voxels);
}

TEST(Rescale, HalvesInPlaneOnly) {
  Volume v(Dims{512, 512, 3}, 0.0f);
  v.set_spacing({0.7, 0.7, 2.0});
  const Volume r = rescale_inplane(v, 0.5);
  EXPECT_EQ(r.dims, (Dims{256, 256, 3}));
  EXPECT_NEAR(r.spacing[0], 1.4, 1e-12);
  EXPECT_NEAR(r.spacing[2], 2.0, 1e-12);
}

TEST(Rescale, OddSizesRoundUp) {
  EXPECT_EQ(rescale_inplane(Volume(Dims{5, 7, 2}), 0.5).dims, (Dims{3, 4, 2}));
  EXPECT_EQ(rescale_mask_inplane(LabelMask(Dims{5, 7, 2}), 0.5).dims, (Dims{3, 4, 2}));
}

TEST(Rescale, FactorOneIsIdentity) {
  Rng rng(6);
  const Volume v = testing::random_volume(rng, Dims{9, 7, 3}, -5, 5);
  EXPECT_EQ(rescale_inplane(v, 1.0).voxels, v.voxels);
}

TEST(Rescale, ConstantSliceStaysConstant) {
  const Volume r = rescale_inplane(Volume(Dims{17, 11, 2}, 42.5f), 0.5);
  for (float x : r.voxels) EXPECT_EQ(x, 42.5f);
}

TEST(Rescale, BadFactorIsRejected) {
  EXPECT_EQ(code_of([] { rescale_inplane(Volume(Dims{4, 4, 1}), 0.0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { rescale_inplane(Volume(Dims{4, 4, 1}), 1.5); }), ErrorCode::InvalidArgument);
}

TEST(RescaleProperty, MaskResamplingKeepsLabelAlphabet) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    LabelMask m(testing::random_dims(rng, 2, 20));
    std::set<std::uint8_t> alphabet;
    for (auto& x : m.voxels) {
      x = static_cast<std::uint8_t>(testing::uniform_size(rng, 0, 3) == 2 ? 2 : 0);
      alphabet.insert(x);
    }
    const double factor = testing::uniform_real(rng, 0.2, 1.0);
    for (std::uint8_t x : rescale_mask_inplane(m, factor).voxels) EXPECT_TRUE(alphabet.count(x)) << int(x);
  }
}

TEST(Clip, HounsfieldWindowBounds) {
  Volume v(Dims{3, 1, 1});
  v.voxels = {-150.0f, 150.0f, 1000.0f};
  EXPECT_EQ(clip_intensities(v, -100, 400).voxels, (std::vector<float>{-100.0f, 150.0f, 400.0f}));
}

TEST(ClipProperty, Idempotent) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Volume v = testing::random_volume(rng, testing::random_dims(rng, 1, 8), -2000, 2000);
    const Volume once = clip_intensities(v, -100, 400);
    EXPECT_EQ(clip_intensities(once, -100, 400).voxels, once.voxels);
  }
}

TEST(Standardize, Examples) {
  Volume two(Dims{2, 1, 1});
  two.voxels = {3.0f, 7.0f};
  EXPECT_EQ(standardize_range(two).voxels, (std::vector<float>{0.0f, 1.0f}));

  Volume v(Dims{3, 1, 1});
  v.voxels = {-100.0f, 150.0f, 400.0f};
  EXPECT_EQ(standardize_range(v).voxels, (std::vector<float>{0.0f, 0.5f, 1.0f}));

  EXPECT_EQ(code_of([] { standardize_range(Volume(Dims{3, 3, 3}, 2.0f)); }), ErrorCode::ConstantVolume);
}

TEST(StandardizeProperty, AfterClipEqualsAffineShortcut) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Volume v = testing::random_volume(rng, testing::random_dims(rng, 2, 12), -1500, 2500);
    v.voxels[0] = -500.0f;
    v.voxels[1] = 900.0f;
    const Volume clipped = clip_intensities(v, -100, 400);
    const Volume s = standardize_range(clipped);
    for (std::size_t i = 0; i < v.voxels.size(); ++i) {
      ASSERT_EQ(s.voxels[i], (clipped.voxels[i] + 100.0f) / 500.0f);
      ASSERT_GE(s.voxels[i], 0.0f);
      ASSERT_LE(s.voxels[i], 1.0f);
    }
  }
}

TEST(Clahe, ConstantVolumeStaysConstant) {
  const Volume out = clahe3d(Volume(Dims{16, 16, 8}, 0.5f), PreprocessConfig{});
  for (float x : out.voxels) EXPECT_EQ(x, out.voxels[0]);
}

TEST(Clahe, MatchesBruteForceReference) {
  Rng rng(10);
  for (int trial = 0; trial < 6; ++trial) {
    const Volume v = testing::random_volume(rng, testing::random_dims(rng, 4, 14), 0, 1);
    PreprocessConfig cfg;
    cfg.clahe_kernel = {testing::uniform_size(rng, 0, 5), testing::uniform_size(rng, 0, 5), testing::uniform_size(rng, 0, 5)};
    cfg.clahe_clip_limit = testing::uniform_real(rng, 0.01, 1.0);
    const Volume got = clahe3d(v, cfg), want = testing::brute_clahe(v, cfg);
    for (std::size_t i = 0; i < v.voxels.size(); ++i) ASSERT_NEAR(got.voxels[i], want.voxels[i], 1e-5);
  }
}

TEST(Clahe, LocalContrastBeatsGlobalEqualizationOnDarkHalf) {
  Rng rng(11);
  Volume v(Dims{8, 8, 8});
  for (std::size_t z = 0; z < 8; ++z)
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) v.at(x, y, z) = x < 4 ? testing::uniform_float(rng, 0.0f, 0.3f) : testing::uniform_float(rng, 0.7f, 1.0f);
  PreprocessConfig cfg;
  cfg.clahe_kernel = {4, 4, 4};
  cfg.clahe_clip_limit = 0.1;
  const Volume local = testing::brute_clahe(v, cfg);
  const Volume global = testing::global_histogram_equalization(v, cfg.clahe_bins);
  ASSERT_EQ(clahe3d(v, cfg).voxels.size(), local.voxels.size());
  auto dark_variance = [](const Volume& u) {
    std::vector<double> xs;
    for (std::size_t z = 0; z < 8; ++z)
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 4; ++x) xs.push_back(u.at(x, y, z));
    const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    double s = 0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / xs.size();
  };
  EXPECT_GE(dark_variance(clahe3d(v, cfg)), dark_variance(global));
  EXPECT_GE(dark_variance(local), dark_variance(global));
}

TEST(ClaheProperty, OutputStaysInUnitInterval) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Volume v = testing::random_volume(rng, testing::random_dims(rng, 1, 16), 0, 1);
    for (float x : clahe3d(v, PreprocessConfig{}).voxels) {
      ASSERT_GE(x, 0.0f);
      ASSERT_LE(x, 1.0f);
    }
  }
}

TEST(Stats, TwoPointDistribution) {
  Volume v(Dims{4, 1, 1});
  v.voxels = {0, 1, 0, 1};
  const NormalizationStats s = compute_stats(std::span(&v, 1));
  EXPECT_FLOAT_EQ(s.mu, 0.5f);
  EXPECT_FLOAT_EQ(s.sigma, 0.5f);
}

TEST(Stats, ConstantCorpusIsZeroVariance) {
  const Volume v(Dims{3, 3, 3}, 0.5f);
  EXPECT_EQ(code_of([&] { compute_stats(std::span(&v, 1)); }), ErrorCode::ZeroVariance);
}

TEST(StatsProperty, StreamingMatchesTwoPass) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Volume> corpus;
    for (std::size_t i = 0, n = testing::uniform_size(rng, 1, 4); i < n; ++i)
      corpus.push_back(testing::random_volume(rng, testing::random_dims(rng, 1, 12), 0, 1));
    const NormalizationStats got = compute_stats(corpus);
    const testing::TwoPassStats want = testing::two_pass_stats(corpus);
    EXPECT_NEAR(got.mu, want.mu, 1e-6);
    EXPECT_NEAR(got.sigma, want.sigma, 1e-6);
  }
}

TEST(StatsProperty, NormalizedCorpusHasZeroMeanUnitSd) {
  Rng rng(14);
  std::vector<Volume> corpus;
  for (int i = 0; i < 3; ++i)
    corpus.push_back(standardize_range(clip_intensities(testing::random_volume(rng, Dims{10, 9, 8}, -300, 600), -100, 400)));
  const NormalizationStats s = compute_stats(corpus);
  std::vector<Volume> normalized;
  for (const Volume& v : corpus) normalized.push_back(znormalize(v, s));
  const testing::TwoPassStats check = testing::two_pass_stats(normalized);
  EXPECT_NEAR(check.mu, 0.0, 1e-5);
  EXPECT_NEAR(check.sigma, 1.0, 1e-5);
}

TEST(Stats, SidecarRoundTrip) {
  testing::TempDir dir;
  NormalizationStats s{0.25f, 0.125f, {"a", "b"}};
  save_stats(s, dir / "stats.json");
  const NormalizationStats back = load_stats(dir / "stats.json");
  EXPECT_EQ(back.mu, s.mu);
  EXPECT_EQ(back.sigma, s.sigma);
  EXPECT_EQ(back.corpus, s.corpus);
}

TEST(ZNormalize, Examples) {
  Volume v(Dims{3, 1, 1});
  v.voxels = {0.3f, 0.5f, 0.9f};
  const Volume z = znormalize(v, NormalizationStats{0.3f, 0.2f, {}});
  EXPECT_EQ(z.voxels[0], 0.0f);
  EXPECT_NEAR(z.voxels[1], 1.0f, 1e-6);
  EXPECT_NEAR(z.voxels[2], 3.0f, 1e-6);
  EXPECT_EQ(code_of([&] { znormalize(v, NormalizationStats{0.0f, 0.0f, {}}); }), ErrorCode::ZeroVariance);
}

Volume numbered_slices(std::size_t S) {
  Volume v(Dims{3, 2, S});
  for (std::size_t z = 0; z < S; ++z)
    for (std::size_t i = 0; i < 6; ++i) v.slice(z)[i] = static_cast<float>(z * 10 + i);
  return v;
}

TEST(Stacks, EdgeSlicesAreReplicated) {
  EXPECT_EQ(stack_indices(100, 2, 0), (std::vector<std::size_t>{0, 0, 0, 1, 2}));
  EXPECT_EQ(stack_indices(100, 2, 99), (std::vector<std::size_t>{97, 98, 99, 99, 99}));
  const auto stacks = assemble_stacks(numbered_slices(100), 2);
  ASSERT_EQ(stacks.size(), 100u);
  for (const auto& s : stacks) EXPECT_EQ(s.channels.size(), 5u);
}

TEST(Stacks, KZeroIsPure2D) {
  const Volume v = numbered_slices(4);
  const auto stacks = assemble_stacks(v, 0);
  for (std::size_t z = 0; z < 4; ++z) {
    ASSERT_EQ(stacks[z].channels.size(), 1u);
    EXPECT_EQ(stacks[z].channels[0], slice_image(v, z));
  }
}

TEST(Stacks, SingleSliceReplicatesSevenTimes) {
  const Volume v = numbered_slices(1);
  const auto stacks = assemble_stacks(v, 3);
  ASSERT_EQ(stacks.size(), 1u);
  ASSERT_EQ(stacks[0].channels.size(), 7u);
  for (const auto& c : stacks[0].channels) EXPECT_EQ(c, slice_image(v, 0));
}

TEST(StacksProperty, MiddleChannelIsTargetSlice) {
  Rng rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    const Volume v = testing::random_volume(rng, testing::random_dims(rng, 1, 9), -1, 1);
    const std::size_t k = testing::uniform_size(rng, 0, 4);
    const auto stacks = assemble_stacks(v, k);
    ASSERT_EQ(stacks.size(), v.dims.nz);
    for (std::size_t z = 0; z < v.dims.nz; ++z) {
      EXPECT_EQ(stacks[z].target_index, z);
      EXPECT_EQ(stacks[z].channels[k], slice_image(v, z));
    }
  }
}

TEST(Pipeline, RejectsDoubleApplication) {
  Rng rng(16);
  const Volume v = testing::random_volume(rng, Dims{16, 16, 4}, -300, 600);
  PreprocessConfig cfg;
  const Volume once = preprocess_volume(v, cfg);
  EXPECT_TRUE(once.preprocessed);
  EXPECT_EQ(code_of([&] { preprocess_volume(once, cfg); }), ErrorCode::AlreadyPreprocessed);
}

TEST(Pipeline, ClipStandardizeStageInUnitInterval) {
  Rng rng(17);
  PreprocessConfig cfg;
  cfg.apply_clahe = false;
  const Volume out = preprocess_volume(testing::random_volume(rng, Dims{16, 16, 4}, -1000, 1000), cfg);
  EXPECT_EQ(out.dims, (Dims{8, 8, 4}));
  for (float x : out.voxels) {
    ASSERT_GE(x, 0.0f);
    ASSERT_LE(x, 1.0f);
  }
}

TEST(Pipeline, PhantomLiverStaysBrighterThanBackground) {
  // Liver at 80 HU in a -300 HU body: after the chain every liver voxel must
  // stay above every background voxel inside the same CLAHE window.
  Volume v(Dims{32, 32, 32}, -300.0f);
  LabelMask liver(v.dims);
  for (std::size_t z = 0; z < 32; ++z)
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        const double dx = (x - 15.5) / 10, dy = (y - 15.5) / 8, dz = (z - 15.5) / 9;
        if (dx * dx + dy * dy + dz * dz <= 1) {
          v.at(x, y, z) = 80.0f;
          liver.at(x, y, z) = 1;
        }
      }
  PreprocessConfig cfg;
  cfg.rescale_factor = 1.0;
  const Volume out = preprocess_volume(v, cfg);
  const Volume ref = testing::brute_clahe(standardize_range(clip_intensities(v, -100, 400)), cfg);
  for (std::size_t i = 0; i < out.voxels.size(); ++i) ASSERT_NEAR(out.voxels[i], ref.voxels[i], 1e-5);
  const std::size_t k = (32 + 7) / 8;
  for (std::size_t tz = 0; tz < 32; tz += k)
    for (std::size_t ty = 0; ty < 32; ty += k)
      for (std::size_t tx = 0; tx < 32; tx += k) {
        float min_liver = 2, max_bg = -1;
        for (std::size_t z = tz; z < tz + k; ++z)
          for (std::size_t y = ty; y < ty + k; ++y)
            for (std::size_t x = tx; x < tx + k; ++x) {
              if (liver.at(x, y, z)) {
                min_liver = std::min(min_liver, out.at(x, y, z));
              } else {
                max_bg = std::max(max_bg, out.at(x, y, z));
              }
            }
        if (min_liver <= 1 && max_bg >= 0) {
          EXPECT_GT(min_liver, max_bg);
        }
      }
}

TEST(Config, ValidationErrors) {
  PreprocessConfig cfg;
  cfg.clip_lo = 500;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::InvalidArgument);
  cfg = PreprocessConfig{};
  cfg.clahe_clip_limit = 0;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::InvalidArgument);
  cfg = PreprocessConfig{};
  cfg.rescale_factor = 0;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::InvalidArgument);
}

}  // namespace
}  // namespace airad
