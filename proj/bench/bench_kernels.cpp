// Serial reference loops vs their OpenMP counterparts, and the structured
// block solve vs dense assembly of Y.
#include <benchmark/benchmark.h>

#include "rsbp/evaluation.hpp"

using namespace rsbp;

namespace {

struct Instance {
  CovarianceSet cov;
  PilotMatrix pilot;
  SinrTermCache cache;
  AuxiliaryState aux;
};

Instance make_instance(int M, int K, int T, double P) {
  SystemDims d{M, K, T};
  ScattererScenario sc;
  Rng rng(derive_seed(7, {std::uint64_t(M), std::uint64_t(K), std::uint64_t(T)}));
  Instance in{build_covariance_set(d, sc, 1.0, rng), build_pilot_matrix(d, M), {}, {}};
  in.cache = build_sinr_terms(in.cov, in.pilot);
  const TransformVector v = initial_point(in.cache, Mode::RS, P);
  in.aux = update_lambdas(v, in.cache);
  update_betas(v, in.cache, in.aux);
  return in;
}

void BM_SolveV(benchmark::State& st, Kernel kernel) {
  const Instance in = make_instance(int(st.range(0)), 4, int(st.range(1)), 1000.0);
  for (auto _ : st) benchmark::DoNotOptimize(solve_v(in.aux, in.cache, 0, 1000.0, Mode::RS, kernel));
}
BENCHMARK_CAPTURE(BM_SolveV, structured, Kernel::Structured)->Args({8, 2})->Args({16, 4})->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_SolveV, dense, Kernel::DenseReference)->Args({8, 2})->Args({16, 4})->Unit(benchmark::kMillisecond);

void BM_Run(benchmark::State& st, Exec exec) {
  const Instance in = make_instance(16, 4, 4, 1000.0);
  SolverConfig cfg;
  cfg.total_power = 1000.0;
  for (auto _ : st) benchmark::DoNotOptimize(run(in.cache, cfg, std::nullopt, exec));
}
BENCHMARK_CAPTURE(BM_Run, serial, Exec::Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Run, parallel, Exec::Parallel)->Unit(benchmark::kMillisecond);

void BM_ErgodicMc(benchmark::State& st, Exec exec) {
  const Instance in = make_instance(16, 4, 4, 1000.0);
  const TransformVector v = initial_point(in.cache, Mode::RS, 1000.0);
  for (auto _ : st) {
    Rng rng(1);
    benchmark::DoNotOptimize(ergodic_rate_mc(v, in.cov, in.pilot, 500, rng, Mode::RS, exec));
  }
}
BENCHMARK_CAPTURE(BM_ErgodicMc, serial, Exec::Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_ErgodicMc, parallel, Exec::Parallel)->Unit(benchmark::kMillisecond);

void BM_Sweep(benchmark::State& st, Exec exec) {
  SweepSpec spec;
  spec.dims = {8, 3, 2};
  spec.pilot_power = 8;
  spec.powers = {10, 1000};
  spec.modes = {Mode::RS, Mode::NoRS};
  spec.n_cov = 4;
  spec.n_chan = 50;
  for (auto _ : st) benchmark::DoNotOptimize(sweep(spec, exec));
}
BENCHMARK_CAPTURE(BM_Sweep, serial, Exec::Serial)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Sweep, parallel, Exec::Parallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
