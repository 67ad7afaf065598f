#include <benchmark/benchmark.h>

#include <random>

#include "popscope/collector.hpp"

using namespace popscope;

namespace {

void BM_PlanAllocation(benchmark::State& state) {
  std::mt19937_64 rng(9);
  std::map<std::string, DailyCounts> counts;
  const Date start = parse_date("2022-01-01");
  for (int k = 0; k < state.range(0); ++k) {
    auto& days = counts["kw" + std::to_string(k)];
    for (int d = 0; d < 365; ++d) days.emplace_back(start + std::chrono::days{d}, rng() % 100000);
  }
  const SamplingPolicy policy{SamplingMode::Proportional, 100, 10000};
  for (auto _ : state) benchmark::DoNotOptimize(plan_allocation(counts, policy));
}
BENCHMARK(BM_PlanAllocation)->Arg(10)->Arg(100);

}  // namespace
