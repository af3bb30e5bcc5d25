// Throughput of the hot paths: convolution, U-Net inference, CLAHE, marching cubes, surface distances.

#include <airad/mesh.hpp>
#include <airad/metrics.hpp>
#include <airad/preprocess.hpp>
#include <airad/unet.hpp>

#include <benchmark/benchmark.h>

#include <random>

namespace {

using namespace airad;

std::vector<float> noise(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> out(n);
  for (float& x : out) x = u(rng);
  return out;
}

LabelMask ball(std::size_t n, double radius, double shift = 0.0) {
  LabelMask m({n, n, n});
  const double c = (static_cast<double>(n) - 1) / 2 + shift;
  for (std::size_t z = 0; z < n; ++z)
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        const double dx = x - c, dy = y - c, dz = z - c;
        m.at(x, y, z) = dx * dx + dy * dy + dz * dz <= radius * radius;
      }
  return m;
}

void BM_Conv2d3x3(benchmark::State& state) {
  const auto size = static_cast<std::size_t>(state.range(0));
  ConvSpec spec;
  spec.in_channels = 32;
  spec.out_channels = 32;
  spec.kernel = 3;
  spec.padding = 1;
  Tensor in(spec.in_channels, size, size);
  in.data = noise(in.data.size(), 1);
  const auto w = noise(spec.weight_count(), 2);
  const auto b = noise(spec.out_channels, 3);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(in, spec, w, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(size * size * 32 * 32 * 9));
}
BENCHMARK(BM_Conv2d3x3)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_ForwardSmallUNet(benchmark::State& state) {
  UNetConfig cfg;
  cfg.levels = 3;
  cfg.channels_per_level = {8, 16, 32};
  const WeightStore w = WeightStore::random(cfg, 4);
  const auto size = static_cast<std::size_t>(state.range(0));
  SliceStack stack;
  stack.width = size;
  stack.height = size;
  stack.target_index = cfg.in_channels / 2;
  for (std::size_t c = 0; c < cfg.in_channels; ++c) {
    Image2 img(size, size);
    img.pixels = noise(img.pixels.size(), 5 + static_cast<unsigned>(c));
    stack.channels.push_back(std::move(img));
  }
  for (auto _ : state) benchmark::DoNotOptimize(forward(stack, w));
}
BENCHMARK(BM_ForwardSmallUNet)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Clahe3d(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Volume v({n, n, n});
  v.voxels = noise(v.voxels.size(), 6);
  for (float& x : v.voxels) x = 0.5f + 0.5f * x;
  const PreprocessConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(clahe3d(v, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(v.voxels.size()));
}
BENCHMARK(BM_Clahe3d)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_MarchingCubes(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const LabelMask m = ball(n, 0.4 * static_cast<double>(n));
  for (auto _ : state) benchmark::DoNotOptimize(marching_cubes(m));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n * n * n));
}
BENCHMARK(BM_MarchingCubes)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_SurfaceDistances(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const LabelMask a = ball(n, 0.35 * static_cast<double>(n));
  const LabelMask b = ball(n, 0.33 * static_cast<double>(n), 1.5);
  for (auto _ : state) benchmark::DoNotOptimize(surface_distances(a, b));
}
BENCHMARK(BM_SurfaceDistances)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
