// Serial reference against the OpenMP kernels. On a machine with one core the
// parallel versions only show their scheduling overhead.

#include <benchmark/benchmark.h>

#include "ltime/functionals.hpp"
#include "ltime/montecarlo.hpp"

using namespace ltime;

namespace {

const DiffusionModel kWobbly("1 + 0.3*sin(x)", "0.5 + 0.2*cos(2*x)");
const FunctionSpec kBump("exp(-x^2)");

mc::SimConfig ensemble_config() {
    mc::SimConfig cfg;
    cfg.n_paths = 256;
    cfg.lower_barrier = -5.0;
    cfg.upper_barrier = 5.0;
    cfg.seed = 1;
    return cfg;
}

void BM_EnsembleSerial(benchmark::State& state) {
    const mc::SimConfig cfg = ensemble_config();
    for (auto _ : state) benchmark::DoNotOptimize(mc::run_ensemble_serial(kWobbly, 0.0, 0.5, &kBump, cfg));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.n_paths));
}

void BM_EnsembleParallel(benchmark::State& state) {
    const mc::SimConfig cfg = ensemble_config();
    const int threads = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(mc::run_ensemble(kWobbly, 0.0, 0.5, &kBump, cfg, threads));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.n_paths));
}

const SearchWindow kWindow{-6.0, 6.0, 25};

void BM_PotentialSerial(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(potential_bound_serial(kWobbly, kBump, {}, kWindow));
}

void BM_PotentialParallel(benchmark::State& state) {
    const int threads = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(potential_bound(kWobbly, kBump, {}, kWindow, threads));
}

}  // namespace

BENCHMARK(BM_EnsembleSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EnsembleParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PotentialSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PotentialParallel)->Arg(1)->Arg(2)->Arg(4)->UseRealTime()->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
