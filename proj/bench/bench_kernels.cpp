#include <benchmark/benchmark.h>

#include "hsgd/bounds.hpp"
#include "hsgd/divergence.hpp"
#include "hsgd/engine.hpp"
#include "hsgd/objectives.hpp"
#include "hsgd/topology.hpp"

using namespace hsgd;

namespace {

RunConfig config(const std::string& fixture, Execution exec) {
  RunConfig c;
  c.objective = make_fixture(fixture);
  const Index n = c.objective->worker_count();
  c.topology = build_two_level(std::vector<Index>{n / 2, n - n / 2}, std::vector<Index>{5, 5}, 20);
  c.noise = fixture.rfind("LG", 0) == 0 ? NoiseModel::minibatch(8) : NoiseModel::gaussian(0.25);
  c.gamma = 0.5 * lr_max_two_level(20.0, c.objective->lipschitz());
  c.horizon = 500;
  c.execution = exec;
  return c;
}

void BM_Engine(benchmark::State& state, const std::string& fixture, Execution exec) {
  const RunConfig c = config(fixture, exec);
  for (auto _ : state) benchmark::DoNotOptimize(run(c).final_loss);
  state.SetItemsProcessed(state.iterations() * c.horizon);
}

void BM_Lemma1(benchmark::State& state, Execution exec) {
  const auto obj = make_fixture("QF6");
  const Vec w(obj->dimension(), 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(verify_lemma1(*obj, 3, w, SamplingMode::enumerate(exec)).empirical);
}

void BM_Lemma3(benchmark::State& state, Execution exec) {
  const auto obj = make_fixture("QF8");
  const MultiLevelTopology topo = build_multi_level(std::vector<Index>{2, 2, 2}, std::vector<Index>{8, 4, 2});
  const Vec w(obj->dimension(), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(verify_lemma3(*obj, topo, 1, w, SamplingMode::enumerate(exec)).max_path_gap);
}

}  // namespace

BENCHMARK_CAPTURE(BM_Engine, qf10_serial, std::string("QF10-noniid"), Execution::serial);
BENCHMARK_CAPTURE(BM_Engine, qf10_parallel, std::string("QF10-noniid"), Execution::parallel);
BENCHMARK_CAPTURE(BM_Engine, lg10_serial, std::string("LG10"), Execution::serial);
BENCHMARK_CAPTURE(BM_Engine, lg10_parallel, std::string("LG10"), Execution::parallel);
BENCHMARK_CAPTURE(BM_Lemma1, serial, Execution::serial);
BENCHMARK_CAPTURE(BM_Lemma1, parallel, Execution::parallel);
BENCHMARK_CAPTURE(BM_Lemma3, serial, Execution::serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Lemma3, parallel, Execution::parallel)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
