#include <benchmark/benchmark.h>

#include "metadiff/dataset.hpp"
#include "metadiff/denoiser.hpp"
#include "metadiff/rng.hpp"
#include "metadiff/sampler.hpp"
#include "metadiff/surrogate.hpp"

using namespace metadiff;

namespace {

struct Inputs {
  Tensor x;
  std::vector<std::size_t> t;
  Matrix cond;
  Tensor eps;
};

Inputs make_inputs(const DenoiserConfig& c, std::size_t n) {
  Rng rng(1);
  Inputs in{Tensor(n, 1, c.quadrant_side, c.quadrant_side), {}, Matrix(n, c.condition_len),
            Tensor(n, 1, c.quadrant_side, c.quadrant_side)};
  for (double& v : in.x.data) v = rng.normal();
  for (double& v : in.eps.data) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) in.t.push_back(1 + rng.uniform_int(0, c.timesteps - 1));
  for (double& v : in.cond.data()) v = rng.uniform(-1, 1);
  return in;
}

void BM_DenoiserForward(benchmark::State& state) {
  const auto model = DenoiserModel::init(DenoiserConfig{}, 1);
  const auto in = make_inputs(model.config(), static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(in.x, in.t, in.cond));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DenoiserForward)->Arg(1)->Arg(32)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_DenoiserBackward(benchmark::State& state) {
  auto model = DenoiserModel::init(DenoiserConfig{}, 1);
  const auto in = make_inputs(model.config(), static_cast<std::size_t>(state.range(0)));
  std::vector<double> grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.backward(in.x, in.t, in.cond, in.eps, grad));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DenoiserBackward)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_SurrogateSolve(benchmark::State& state) {
  const ProxyParams proxy;
  Rng rng(2);
  const StructureGrid g = expand_symmetric(sample_structure(rng, 8));
  const ExtraParams e{2.7, 0.8, 4.2};
  for (auto _ : state) benchmark::DoNotOptimize(solve(g, e, proxy));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_SurrogateSolve)->Unit(benchmark::kMicrosecond);

void BM_SolveBatch(benchmark::State& state) {
  const ProxyParams proxy;
  Rng rng(3);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<StructureGrid> grids;
  std::vector<ExtraParams> extras(n, ExtraParams{2.6, 0.9, 3.9});
  for (std::size_t i = 0; i < n; ++i) grids.push_back(expand_symmetric(sample_structure(rng, 8)));
  for (auto _ : state) benchmark::DoNotOptimize(solve_batch(grids, extras, proxy));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SolveBatch)->Arg(256)->Unit(benchmark::kMicrosecond);

// One guided 200-step chain: 400 forward rows.
void BM_GuidedChain(benchmark::State& state) {
  const auto model = DenoiserModel::init(DenoiserConfig{}, 1);
  const auto sched = NoiseSchedule::linear(200);
  std::array<double, 55> v{};
  for (std::size_t i = 0; i < 55; ++i) v[i] = 0.01 * static_cast<double>(i % 50);
  const SampleRequest req{ConditionVector(v), static_cast<std::size_t>(state.range(0)), 2.0, 4};
  for (auto _ : state) benchmark::DoNotOptimize(generate_quadrants(model, sched, req));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GuidedChain)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
