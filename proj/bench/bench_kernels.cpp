// Serial reference kernels vs the packed OpenMP kernels the model uses.

#include <benchmark/benchmark.h>

#include <random>

#include "sdcn/model.hpp"
#include "sdcn/sdconv.hpp"
#include "sdcn/tensor.hpp"

using namespace sdcn;

namespace {

Tensor4 random4(Shape4 s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> d;
    Tensor4 t(s);
    for (float& v : t.span()) v = d(rng);
    return t;
}

Tensor2 random2(std::size_t r, std::size_t c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> d;
    Tensor2 t(r, c);
    for (float& v : t.span()) v = d(rng);
    return t;
}

// Second desk block branch: 40 -> 16 channels at 32 x 128, k = 5, d = [1, 8].
const ConvSpec kSpec{5, {1, 8}, 40, 16, Padding::same};
const Shape4 kInput{4, 40, 32, 128};

ConvParams conv_params() {
    auto p = make_conv_params<float>(kSpec);
    p.weights = random4(p.weights.shape(), 3);
    return p;
}

void BM_MatmulReference(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random2(n, n, 1), b = random2(n, n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(reference::matmul(a, b));
    state.SetItemsProcessed(state.iterations() * 2 * static_cast<std::int64_t>(n * n * n));
}

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random2(n, n, 1), b = random2(n, n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * 2 * static_cast<std::int64_t>(n * n * n));
}

void BM_SdconvForwardReference(benchmark::State& state) {
    const auto x = random4(kInput, 4);
    const auto p = conv_params();
    for (auto _ : state) benchmark::DoNotOptimize(reference::sdconv_forward(x, kSpec, p));
}

void BM_SdconvForward(benchmark::State& state) {
    const auto x = random4(kInput, 4);
    const auto p = conv_params();
    for (auto _ : state) benchmark::DoNotOptimize(sdconv_forward(x, kSpec, p));
}

void BM_SdconvBackwardReference(benchmark::State& state) {
    const auto x = random4(kInput, 4);
    const auto p = conv_params();
    const auto g = random4(kSpec.output_shape(kInput), 5);
    for (auto _ : state) benchmark::DoNotOptimize(reference::sdconv_backward(x, kSpec, p, g));
}

void BM_SdconvBackward(benchmark::State& state) {
    const auto x = random4(kInput, 4);
    const auto p = conv_params();
    const auto g = random4(kSpec.output_shape(kInput), 5);
    for (auto _ : state) benchmark::DoNotOptimize(sdconv_backward(x, kSpec, p, g));
}

// One desk-scale training step's worth of model work (forward + backward, batch 16).
void BM_DeskForwardBackward(benchmark::State& state) {
    const SdcnModel m = init_model(SdcnConfig::desk(), 1);
    const auto x = random4({16, 4, 64, 256}, 6);
    const std::vector<double> up(16, 1.0 / 16);
    ForwardCache cache;
    for (auto _ : state) {
        model_forward(x, m, &cache);
        benchmark::DoNotOptimize(model_backward_logits(m, cache, up));
    }
}

}  // namespace

BENCHMARK(BM_MatmulReference)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Matmul)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SdconvForwardReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SdconvForward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SdconvBackwardReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SdconvBackward)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeskForwardBackward)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
