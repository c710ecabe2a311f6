#include <benchmark/benchmark.h>

#include <omp.h>

#include <map>
#include <random>

#include "../tests/scenario.hpp"
#include "../tests/support.hpp"
#include "vihd/pipeline.hpp"
#include "vihd/vdp.hpp"

using namespace vihd;

namespace {

struct Trace {
  TraceMeta meta;
  GenerationRun run;
};

// A decoder-sized trace: 32 layers, 32 heads, 576 visual tokens.
const Trace& big_trace(std::size_t steps) {
  static std::map<std::size_t, Trace> cache;
  auto it = cache.find(steps);
  if (it == cache.end()) {
    std::mt19937_64 rng(1);
    Trace t;
    t.meta = testing::random_meta(rng, 32, 32, 576, 640);
    t.run = testing::random_run(rng, t.meta, steps, "r");
    it = cache.emplace(steps, std::move(t)).first;
  }
  return it->second;
}

void BM_ProfileSerial(benchmark::State& state) {
  const auto& t = big_trace(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(vdp::serial::dependency_profile(t.run, t.meta));
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(t.run.attention.values().size() * 4));
}

void BM_ProfileParallel(benchmark::State& state) {
  const auto& t = big_trace(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(vdp::dependency_profile(t.run, t.meta));
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(t.run.attention.values().size() * 4));
}

// Same kernel as above pinned to one thread, isolating the threading gain
// from the traversal difference against the serial reference.
void BM_ProfileOneThread(benchmark::State& state) {
  const auto& t = big_trace(static_cast<std::size_t>(state.range(0)));
  const int before = omp_get_max_threads();
  omp_set_num_threads(1);
  for (auto _ : state) benchmark::DoNotOptimize(vdp::dependency_profile(t.run, t.meta));
  omp_set_num_threads(before);
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(t.run.attention.values().size() * 4));
}

const std::vector<SampleBundle>& dataset() {
  static const auto bundles = [] {
    RunConfig cfg;
    const auto specs = testing::toy_scenario(60, 60);
    std::vector<SampleBundle> out;
    for (const auto& s : pipeline::simulate_dataset(specs, cfg)) out.push_back(s.bundle);
    return out;
  }();
  return bundles;
}

void BM_DetectSerial(benchmark::State& state) {
  const auto& b = dataset();
  const semantic::ExactMatch exact;
  const RunConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(pipeline::serial::detect_all(b, exact, cfg));
}

void BM_DetectParallel(benchmark::State& state) {
  const auto& b = dataset();
  const semantic::ExactMatch exact;
  const RunConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(pipeline::detect_all(b, exact, cfg));
}

}  // namespace

BENCHMARK(BM_ProfileSerial)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProfileOneThread)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProfileParallel)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DetectSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DetectParallel)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
