#include <benchmark/benchmark.h>

#include "popscope/corpus.hpp"

using namespace popscope;

namespace {

MetaRecord sample_record() {
  MetaRecord r;
  r.text = "a post with || separators, ]] brackets and \\ escapes\nacross lines";
  r.created = *try_parse_timestamp("2022-12-27 07:10:25");
  r.location = "USA";
  r.prob = ProbTag::Thirty;
  return r;
}

void BM_Render(benchmark::State& state) {
  const auto r = sample_record();
  for (auto _ : state) benchmark::DoNotOptimize(render(r));
}
BENCHMARK(BM_Render);

void BM_Parse(benchmark::State& state) {
  const auto line = render(sample_record());
  for (auto _ : state) benchmark::DoNotOptimize(parse_meta_record(line));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * line.size()));
}
BENCHMARK(BM_Parse);

void BM_AssignTags(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(assign_prob_tags(static_cast<std::size_t>(state.range(0)), 7));
}
BENCHMARK(BM_AssignTags)->Arg(10000);

}  // namespace
