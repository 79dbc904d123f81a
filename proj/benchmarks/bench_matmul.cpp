#include <benchmark/benchmark.h>

#include "msn/tensor.hpp"
#include "msn/rng.hpp"

using namespace msn;

template <typename T>
static void BM_matmul(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(7);
    Tensor<T> a({n, n});
    Tensor<T> b({n, n});
    for (int64_t i = 0; i < a.numel(); ++i) a[i] = static_cast<T>(rng.next_gaussian());
    for (int64_t i = 0; i < b.numel(); ++i) b[i] = static_cast<T>(rng.next_gaussian());
    for (auto _ : state) {
        auto c = matmul(a, b);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK_TEMPLATE(BM_matmul, float)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK_TEMPLATE(BM_matmul, double)->Arg(64)->Arg(128)->Arg(256);

BENCHMARK_MAIN();
