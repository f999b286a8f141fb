// OpenMP kernels against the serial references they are tested against.
#include "seg4d/hdbscan.hpp"
#include "seg4d/rasterizer.hpp"
#include "seg4d/synth.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace seg4d;

namespace {

const SyntheticData& scene_data() {
  static const SyntheticData data = [] {
    SceneSpec spec = SceneSpec::default_scene();
    spec.permute_masks = false;
    return generate_dataset(spec);
  }();
  return data;
}

FeatureMap random_grad(const RenderOutput& r) {
  FeatureMap g(r.feature_map.height, r.feature_map.width, r.feature_map.channels);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  for (double& v : g.data) v = n(rng);
  return g;
}

PointMatrix random_points(int n) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> d;
  PointMatrix p(n, 8);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 8; ++c) p(i, c) = d(rng) + (i % 4) * 3.0;
  return p;
}

void BM_render(benchmark::State& state) {
  const auto& d = scene_data();
  for (auto _ : state) benchmark::DoNotOptimize(render(d.scene, d.dataset.cameras[0], 0.5));
}

void BM_render_reference(benchmark::State& state) {
  const auto& d = scene_data();
  for (auto _ : state) benchmark::DoNotOptimize(reference::render(d.scene, d.dataset.cameras[0], 0.5));
}

void BM_backprop(benchmark::State& state) {
  const auto& d = scene_data();
  const auto r = render(d.scene, d.dataset.cameras[0], 0.5);
  const auto g = random_grad(r);
  for (auto _ : state) benchmark::DoNotOptimize(backprop_features(r, g, d.scene.size()));
}

void BM_backprop_reference(benchmark::State& state) {
  const auto& d = scene_data();
  const auto r = render(d.scene, d.dataset.cameras[0], 0.5);
  const auto g = random_grad(r);
  for (auto _ : state) benchmark::DoNotOptimize(reference::backprop_features(r, g, d.scene.size()));
}

void BM_mst(benchmark::State& state) {
  const auto p = random_points(static_cast<int>(state.range(0)));
  const auto core = core_distances(p, 10);
  for (auto _ : state) benchmark::DoNotOptimize(mutual_reachability_mst(p, core));
}

void BM_mst_reference(benchmark::State& state) {
  const auto p = random_points(static_cast<int>(state.range(0)));
  const auto core = core_distances(p, 10);
  for (auto _ : state) benchmark::DoNotOptimize(reference::prim_dense(reference::mutual_reachability_matrix(p, core)));
}

}  // namespace

BENCHMARK(BM_render)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_render_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_backprop)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_backprop_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_mst)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_mst_reference)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
