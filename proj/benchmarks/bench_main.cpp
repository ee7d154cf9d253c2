#include "nebp/data_association.hpp"
#include "nebp/nebp.hpp"
#include "nebp/simulator.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

nebp::DaInputs random_inputs(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    nebp::DaInputs in;
    in.beta.resize(n, n + 1);
    in.xi.resize(n);
    for (int i = 0; i < n; ++i) {
        in.beta(i, 0) = 0.1 + u(rng);
        for (int j = 1; j <= n; ++j) in.beta(i, j) = u(rng) < 0.2 ? 5.0 * u(rng) : 0.0;
    }
    for (int j = 0; j < n; ++j) in.xi(j) = 1.0 + u(rng);
    return in;
}

/// Fixed 20 iterations so the time reflects the per-iteration cost only.
void BM_IterateDa(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto in = random_inputs(n, 7);
    for (auto _ : state) benchmark::DoNotOptimize(nebp::iterate_da(in, 20, 0.0));
    state.SetComplexityN(static_cast<std::int64_t>(n) * n);
}
BENCHMARK(BM_IterateDa)->RangeMultiplier(2)->Range(8, 128)->Complexity(benchmark::oN);

nebp::Dataset scene() {
    nebp::ScenarioFamily family;
    family.n_frames = 10;
    return nebp::simulate(nebp::sample_scenario(family, 11));
}

void BM_BpSequence(benchmark::State& state) {
    const auto d = scene();
    nebp::ModelParams params;
    params.n_particles = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(nebp::track_sequence(d.frames, params, nebp::Method::kBp, nullptr, {}, 1));
    }
}
BENCHMARK(BM_BpSequence)->Arg(100)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_NebpSequence(benchmark::State& state) {
    const auto d = scene();
    nebp::ModelParams params;
    params.n_particles = 100;
    nebp::NebpConfig cfg;
    cfg.feature_dim = static_cast<int>(state.range(0));
    cfg.hidden_dim = static_cast<int>(state.range(0));
    const auto nets = nebp::NebpNetworks::create(cfg);
    for (auto _ : state) {
        benchmark::DoNotOptimize(nebp::track_sequence(d.frames, params, nebp::Method::kNebp, &nets, {}, 1));
    }
}
BENCHMARK(BM_NebpSequence)->Arg(16)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
