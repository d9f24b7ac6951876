#include <benchmark/benchmark.h>

#include "contagion/pde.hpp"
#include "contagion/sim.hpp"
#include "contagion/strategy.hpp"

using namespace contagion;

namespace {

ModelSpec tilted_benchmark() {
    ModelSpec s = load_preset("benchmark_s5");
    s.market.mu = {ScalarFn::constant(0.3), ScalarFn::constant(0.3)};
    return s;
}

void BM_SolveSystem(benchmark::State& state) {
    const ModelSpec s = tilted_benchmark();
    const GridSpec g = GridSpec::for_model(s, static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(solve_recursive_system(s, g));
    state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(1) * 4);
}
BENCHMARK(BM_SolveSystem)->Args({101, 100})->Args({401, 400})->Unit(benchmark::kMillisecond);

void BM_SolveHhat(benchmark::State& state) {
    const ModelSpec s = tilted_benchmark();
    const NodeCoefficients c = node_coefficients(0.1, DefaultState{0}, s);
    const NodeValues v{1.2, 0.05, {1.25, 1.3}};
    for (auto _ : state) benchmark::DoNotOptimize(solve_hhat(c, v, Eigen::VectorXd()));
}
BENCHMARK(BM_SolveHhat);

void BM_GeneratePath(benchmark::State& state) {
    const ModelSpec s = load_preset("benchmark_s5");
    SimConfig c = SimConfig::for_model(s);
    c.n_steps = static_cast<int>(state.range(0));
    const MarketSimulator sim(s, c);
    MarketPath path;
    std::uint64_t p = 0;
    for (auto _ : state) {
        sim.generate(p++, path);
        benchmark::DoNotOptimize(path.y.data());
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GeneratePath)->Arg(100)->Arg(400);

void BM_WealthAlong(benchmark::State& state) {
    const ModelSpec s = tilted_benchmark();
    const SystemSolution sol = solve_recursive_system(s, GridSpec::for_model(s, 101, 400));
    SimConfig c = SimConfig::for_model(s);
    c.n_steps = 400;
    c.y_lo = sol.grid.y_lo;
    c.y_hi = sol.grid.y_hi;
    const MarketSimulator sim(s, c);
    MarketPath path;
    WealthPath w;
    std::uint64_t p = 0;
    for (auto _ : state) {
        sim.generate(p++, path);
        wealth_along(path, s, &sol, c.n_steps, WealthOptions{}, w);
        benchmark::DoNotOptimize(w.terminal_utility);
    }
}
BENCHMARK(BM_WealthAlong);

} // namespace

BENCHMARK_MAIN();
