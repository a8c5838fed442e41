#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ropdf/diagnostics.hpp"
#include "ropdf/spectral.hpp"

using namespace ropdf;

namespace {

ScatterSlice gaussian_slice(std::size_t m) {
    const auto draws = sample_initial(builtin_model("gaussian_static"), m, 1);
    ScatterSlice s;
    for (const auto& d : draws) {
        s.x.push_back(d[0]);
        s.y.push_back(d[1]);
    }
    return s;
}

void BM_SplineFit(benchmark::State& state) {
    const auto s = gaussian_slice(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(fit_smoothing_spline(s.x, s.y));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SplineFit)->RangeMultiplier(10)->Range(100, 10000)->Complexity();

void BM_MovingAverage(benchmark::State& state) {
    const auto s = gaussian_slice(static_cast<std::size_t>(state.range(0)));
    const UniformGrid g(-5.0, 5.0, 256);
    for (auto _ : state) benchmark::DoNotOptimize(ce_moving_average(s, g));
}
BENCHMARK(BM_MovingAverage)->RangeMultiplier(10)->Range(100, 10000);

void BM_Kde(benchmark::State& state) {
    const auto s = gaussian_slice(static_cast<std::size_t>(state.range(0)));
    const UniformGrid g(-5.0, 5.0, 256);
    for (auto _ : state) benchmark::DoNotOptimize(kde_pdf(s.x, g));
}
BENCHMARK(BM_Kde)->RangeMultiplier(10)->Range(1000, 100000);

void BM_FluxDivergence(benchmark::State& state) {
    const UniformGrid g(-8.0, 8.0, static_cast<std::size_t>(state.range(0)));
    SpectralOperator op(g);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    std::vector<double> v(g.n), u(g.n), out(g.n);
    for (std::size_t i = 0; i < g.n; ++i) {
        v[i] = n(rng);
        u[i] = n(rng);
    }
    for (auto _ : state) {
        op.flux_divergence(v, u, out);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_FluxDivergence)->RangeMultiplier(2)->Range(128, 2048);

void BM_ReducedSolve(benchmark::State& state) {
    const auto m = builtin_model("kraichnan_orszag");
    IntegrationOptions io;
    io.t_final = 1.0;
    io.store_stride = 50;
    const auto e = simulate(m, 1000, 2, io);
    const auto g = fit_domain(e, 0, static_cast<std::size_t>(state.range(0)));
    const std::vector<ClosureField> fields = {build_closure_field(e, 0, reduced_terms(m, 0).terms[0], g, e.times(), {})};
    const auto p0 = initial_marginal(m, 0, g);
    SolveReport rep;
    for (auto _ : state) benchmark::DoNotOptimize(solve_reduced_pdf(m, 0, fields, p0, {0.0, 1.0}, {}, &rep));
    state.counters["steps"] = static_cast<double>(rep.steps);
}
BENCHMARK(BM_ReducedSolve)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Ensemble(benchmark::State& state) {
    const auto m = builtin_model(state.range(0) == 0 ? "kraichnan_orszag" : "malaria");
    IntegrationOptions io;
    io.t_final = state.range(0) == 0 ? 1.0 : 10.0;
    io.dt = state.range(0) == 0 ? 1e-3 : 0.05;
    io.store_stride = 50;
    for (auto _ : state) benchmark::DoNotOptimize(simulate(m, 200, 4, io));
    state.SetLabel(m.name);
}
BENCHMARK(BM_Ensemble)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
