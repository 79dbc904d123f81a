#include <benchmark/benchmark.h>

#include "msn/ops.hpp"

using namespace msn;

namespace {

template <typename T>
Tensor<T> randn(Shape shape, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.next_gaussian());
    return t;
}

}  // namespace

// Lowered (window-gather + matmul) conv3d against the naive 7-loop kernel.
// The naive kernel is the correctness oracle; this pair tracks the speedup.

static void BM_conv3d_lowered(benchmark::State& state) {
    const int ch = static_cast<int>(state.range(0));
    Rng rng(1);
    auto spec = Conv3dSpec::same(ch, ch, 3, 3, 3);
    auto x = make_leaf(randn<float>({1, ch, 8, 16, 16}, rng), false);
    auto w = make_leaf(randn<float>(spec.weight_shape(), rng), false);
    auto b = make_leaf(randn<float>(spec.bias_shape(), rng), false);
    for (auto _ : state) {
        auto out = conv3d(x, w, b, spec);
        benchmark::DoNotOptimize(out->value.data());
    }
    state.SetItemsProcessed(state.iterations() * x->value.numel());
}
BENCHMARK(BM_conv3d_lowered)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_conv3d_naive(benchmark::State& state) {
    const int ch = static_cast<int>(state.range(0));
    Rng rng(1);
    auto spec = Conv3dSpec::same(ch, ch, 3, 3, 3);
    auto x = randn<float>({1, ch, 8, 16, 16}, rng);
    auto w = randn<float>(spec.weight_shape(), rng);
    auto b = randn<float>(spec.bias_shape(), rng);
    for (auto _ : state) {
        auto out = reference::conv3d_naive(x, w, b, spec);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_conv3d_naive)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_conv2d_lowered(benchmark::State& state) {
    const int ch = static_cast<int>(state.range(0));
    Rng rng(2);
    auto spec = Conv2dSpec::same(ch, ch, 3, 3);
    auto x = make_leaf(randn<float>({1, ch, 32, 32}, rng), false);
    auto w = make_leaf(randn<float>(spec.weight_shape(), rng), false);
    auto b = make_leaf(randn<float>(spec.bias_shape(), rng), false);
    for (auto _ : state) {
        auto out = conv2d(x, w, b, spec);
        benchmark::DoNotOptimize(out->value.data());
    }
    state.SetItemsProcessed(state.iterations() * x->value.numel());
}
BENCHMARK(BM_conv2d_lowered)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_conv3d_backward(benchmark::State& state) {
    const int ch = static_cast<int>(state.range(0));
    Rng rng(3);
    auto spec = Conv3dSpec::same(ch, ch, 3, 3, 3);
    Tensor<float> xv = randn<float>({1, ch, 8, 16, 16}, rng);
    Tensor<float> wv = randn<float>(spec.weight_shape(), rng);
    Tensor<float> bv = randn<float>(spec.bias_shape(), rng);
    Tensor<float> ones = Tensor<float>::full(xv.shape(), 1.0f);
    for (auto _ : state) {
        auto x = make_leaf(xv, true);
        auto w = make_leaf(wv, true);
        auto b = make_leaf(bv, true);
        auto loss = weighted_sum(conv3d(x, w, b, spec), ones);
        backward(loss);
        benchmark::DoNotOptimize(w->grad.data());
    }
}
BENCHMARK(BM_conv3d_backward)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
