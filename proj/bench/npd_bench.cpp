// Serial reference kernels against their OpenMP versions.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "npd/ph.hpp"
#include "npd/swarm.hpp"
#include "npd/tensor.hpp"

namespace {

npd::Cloud cloud(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    npd::Cloud c(n);
    for (auto& p : c)
        for (auto& x : p) x = u(rng);
    return c;
}

void BM_matmul(benchmark::State& state, bool parallel) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    std::vector<double> a(n * n, 0.5), b(n * n, 0.25), out(n * n);
    for (auto _ : state) {
        std::fill(out.begin(), out.end(), 0.0);
        if (parallel)
            npd::ad::kernels::matmul_acc(a.data(), b.data(), out.data(), n, n, n);
        else
            npd::ad::kernels::matmul_acc_serial(a.data(), b.data(), out.data(), n, n, n);
        benchmark::DoNotOptimize(out.data());
    }
}

void BM_dorsogna_forces(benchmark::State& state, bool parallel) {
    const auto x = cloud(static_cast<std::size_t>(state.range(0)), 1);
    npd::swarm::DorsognaParams p;
    npd::Cloud f;
    for (auto _ : state) {
        if (parallel)
            npd::swarm::kernels::dorsogna_forces(x, p, f);
        else
            npd::swarm::kernels::dorsogna_forces_serial(x, p, f);
        benchmark::DoNotOptimize(f.data());
    }
}

void BM_distance_matrix(benchmark::State& state, bool parallel) {
    const auto x = cloud(static_cast<std::size_t>(state.range(0)), 2);
    std::vector<double> d;
    for (auto _ : state) {
        if (parallel)
            npd::ph::kernels::distance_matrix(x, d);
        else
            npd::ph::kernels::distance_matrix_serial(x, d);
        benchmark::DoNotOptimize(d.data());
    }
}

void BM_rips_batch(benchmark::State& state, bool parallel) {
    std::vector<npd::Cloud> clouds;
    for (unsigned i = 0; i < 16; ++i) clouds.push_back(cloud(static_cast<std::size_t>(state.range(0)), 10 + i));
    const npd::ph::RipsOptions opt{static_cast<int>(state.range(1)), {}, npd::ph::kDefaultPointCapDim2};
    for (auto _ : state) {
        auto r = parallel ? npd::ph::rips_persistence_batch(clouds, opt)
                          : npd::ph::rips_persistence_batch_serial(clouds, opt);
        benchmark::DoNotOptimize(r.data());
    }
    state.SetItemsProcessed(state.iterations() * 16);
}

}  // namespace

BENCHMARK_CAPTURE(BM_matmul, serial, false)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_matmul, openmp, true)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_dorsogna_forces, serial, false)->Arg(200)->Arg(2000);
BENCHMARK_CAPTURE(BM_dorsogna_forces, openmp, true)->Arg(200)->Arg(2000);
BENCHMARK_CAPTURE(BM_distance_matrix, serial, false)->Arg(500);
BENCHMARK_CAPTURE(BM_distance_matrix, openmp, true)->Arg(500);
BENCHMARK_CAPTURE(BM_rips_batch, serial, false)->Args({100, 1})->Args({200, 1})->Args({100, 2});
BENCHMARK_CAPTURE(BM_rips_batch, openmp, true)->Args({100, 1})->Args({200, 1})->Args({100, 2});

BENCHMARK_MAIN();
