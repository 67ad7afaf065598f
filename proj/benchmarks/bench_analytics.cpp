#include <benchmark/benchmark.h>

#include <random>

#include "popscope/analytics.hpp"

using namespace popscope;

namespace {

Matrix random_matrix(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = g(rng);
  return x;
}

void BM_PcaFit(benchmark::State& state) {
  const Matrix x = random_matrix(state.range(0), 1536, 1);
  for (auto _ : state) benchmark::DoNotOptimize(pca_fit(x, 50));
}
BENCHMARK(BM_PcaFit)->Arg(300)->Arg(1500)->Unit(benchmark::kMillisecond);

void BM_ConditionalAffinities(benchmark::State& state) {
  const Matrix y = random_matrix(state.range(0), 50, 2);
  for (auto _ : state) benchmark::DoNotOptimize(tsne::conditional_affinities(y, 30.0));
}
BENCHMARK(BM_ConditionalAffinities)->Arg(500)->Arg(1500)->Unit(benchmark::kMillisecond);

void BM_KlGradient(benchmark::State& state) {
  const auto n = state.range(0);
  const Matrix p = tsne::joint_affinities(tsne::conditional_affinities(random_matrix(n, 20, 3), 30.0).p);
  const Matrix z = random_matrix(n, 2, 4);
  for (auto _ : state) benchmark::DoNotOptimize(tsne::kl_gradient(p, z));
}
BENCHMARK(BM_KlGradient)->Arg(300)->Arg(1500)->Unit(benchmark::kMicrosecond);

void BM_TsneProject(benchmark::State& state) {
  const Matrix y = random_matrix(state.range(0), 50, 5);
  TsneParams params;
  params.iterations = 300;
  for (auto _ : state) benchmark::DoNotOptimize(tsne_project(y, params));
}
BENCHMARK(BM_TsneProject)->Arg(300)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Dbscan(benchmark::State& state) {
  const Matrix pts = random_matrix(state.range(0), 2, 6);
  for (auto _ : state) benchmark::DoNotOptimize(dbscan(pts, {0.2, 5}));
}
BENCHMARK(BM_Dbscan)->Arg(1000)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);

}  // namespace
