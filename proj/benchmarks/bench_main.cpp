#include <benchmark/benchmark.h>

#include <cmath>
#include <string>
#include <vector>

#include "emplace/analytics.hpp"
#include "emplace/detect.hpp"
#include "emplace/geo.hpp"
#include "emplace/model.hpp"
#include "emplace/rng.hpp"

using namespace emplace;

namespace {

void BM_Dbscan(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const geo::LatLon origin{52.37, 4.89};
  const double side = std::sqrt(static_cast<double>(n));
  std::vector<geo::PanoramaMeta> pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i].id = "p" + std::to_string(i);
    pts[i].position = geo::unproject_local(origin, {rng.uniform(0, side), rng.uniform(0, side)});
  }
  for (auto _ : state) benchmark::DoNotOptimize(geo::dbscan_labels(pts));
}
BENCHMARK(BM_Dbscan)->RangeMultiplier(4)->Range(256, 16384);

void BM_ToyEncoderForward(benchmark::State& state) {
  Rng rng(2);
  model::VectorGrid feat(50, 15, 8);
  for (auto& v : feat.data()) v = static_cast<float>(rng.uniform());
  const auto enc = model::ToyEncoder::random(16, 8, 3);
  for (auto _ : state) benchmark::DoNotOptimize(enc.forward(feat));
}
BENCHMARK(BM_ToyEncoderForward);

void BM_WindowScan(benchmark::State& state) {
  Rng rng(4);
  detect::Heatmap h;
  h.grid_w = 50;
  h.grid_h = 15;
  for (std::size_t i = 0; i < 750; ++i) h.values.push_back(rng.uniform());
  detect::DetectorConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(detect::detect_large(h, cfg));
    benchmark::DoNotOptimize(detect::detect_small(h, cfg));
  }
}
BENCHMARK(BM_WindowScan);

void BM_Ols(benchmark::State& state) {
  Rng rng(5);
  std::vector<double> x, y;
  for (int i = 0; i < state.range(0); ++i) {
    x.push_back(rng.uniform());
    y.push_back(2 * x.back() + rng.normal());
  }
  for (auto _ : state) benchmark::DoNotOptimize(analytics::ols_regression(x, y));
}
BENCHMARK(BM_Ols)->Arg(22)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
