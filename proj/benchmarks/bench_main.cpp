#include <benchmark/benchmark.h>

#include "striprw/algebra.hpp"
#include "striprw/occupation.hpp"
#include "striprw/walker.hpp"

using namespace striprw;

namespace {

EnvironmentLaw scalar_law() { return model1_law({0.8, 0.3}, {0.5, 0.5}, 0.05); }

EnvironmentLaw strip_law() {
  Triple a, b;
  a.P = Matrix(2, 2);
  a.P << .45, .15, .15, .45;
  a.Q = Matrix::Constant(2, 2, 0.1);
  a.R = Matrix(2, 2);
  a.R << 0, .2, .2, 0;
  b.P = Matrix(2, 2);
  b.P << .15, .1, .1, .2;
  b.Q = Matrix(2, 2);
  b.Q << .35, .2, .2, .3;
  b.R = Matrix::Constant(2, 2, 0.1);
  return mixture_law({a, b}, {0.5, 0.5}, 0.05);
}

void BM_BuildChain(benchmark::State& state) {
  const auto law = state.range(0) == 1 ? scalar_law() : strip_law();
  const long L = state.range(1);
  const auto env = sample_iid_environment(law, -500, L, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_chain(env, 0, 1e-10));
  }
  state.SetItemsProcessed(state.iterations() * (L + 501));
}
BENCHMARK(BM_BuildChain)->Args({1, 100000})->Args({2, 100000})
    ->Unit(benchmark::kMillisecond);

void BM_Profile(benchmark::State& state) {
  const auto env = sample_iid_environment(strip_law(), -500, 20500, 2);
  const auto ch = build_chain(env, 0, 1e-10);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rho_profile(ch, 0, 19999));
  }
  state.SetItemsProcessed(state.iterations() * 20000);
}
BENCHMARK(BM_Profile)->Unit(benchmark::kMillisecond);

// One population step per replica per layer.
void BM_PopulationMoment(benchmark::State& state) {
  const auto law = state.range(0) == 1 ? scalar_law() : strip_law();
  MomentOptions o;
  o.burn_in = 20;
  for (auto _ : state) {
    benchmark::DoNotOptimize(moment_lyapunov(law, 0.5, 100, 2000, 3, o));
  }
  state.SetItemsProcessed(state.iterations() * 100 * 2000);
}
BENCHMARK(BM_PopulationMoment)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_CrossingSampler(benchmark::State& state) {
  const long N = state.range(0);
  const auto env = sample_iid_environment(scalar_law(), -2000, N + 2000, 4);
  const auto ch = build_chain(env, 0, 1e-10);
  const Cutoff cut = certify_cutoff(ch, N, 1e-9);
  std::uint64_t k = 0;
  for (auto _ : state) {
    Rng rng(5, k++);
    benchmark::DoNotOptimize(sample_crossings(env, 0, N, cut.layer, rng));
  }
  state.SetItemsProcessed(state.iterations() * N);
}
BENCHMARK(BM_CrossingSampler)->Arg(10000)->Arg(100000)
    ->Unit(benchmark::kMillisecond);

void BM_WalkerSteps(benchmark::State& state) {
  const auto env = sample_iid_environment(strip_law(), -2000, 600, 6);
  const Walker w(env);
  Rng rng(7, 0);
  Site z{0, 1};
  for (auto _ : state) {
    z = w.step(z, rng);
    if (z.n > 500 || z.n < -1900) z = {0, 1};
    benchmark::DoNotOptimize(z);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_WalkerSteps);

}  // namespace
BENCHMARK_MAIN();
