// Timing comparison of the OpenMP kernels against their serial references.
#include <benchmark/benchmark.h>

#include <random>

#include "microseg/kernels.hpp"

using microseg::Tensor;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (double& v : t.data) v = d(rng);
    return t;
}

std::vector<std::uint8_t> grid_masks(std::size_t n, std::size_t h, std::size_t w) {
    std::vector<std::uint8_t> m(n * h * w, 0);
    for (std::size_t p = 0; p < h * w; ++p) m[(p % n) * h * w + p] = 1;
    return m;
}

void bm_conv_forward_omp(benchmark::State& state) {
    const Tensor input = random_tensor({8, 64, 64}, 1);
    const Tensor weight = random_tensor({8, 8, 3, 3}, 2);
    const Tensor bias = random_tensor({8}, 3);
    for (auto _ : state)
        benchmark::DoNotOptimize(microseg::kernels::conv2d_forward(input, weight, bias));
}

void bm_conv_forward_serial(benchmark::State& state) {
    const Tensor input = random_tensor({8, 64, 64}, 1);
    const Tensor weight = random_tensor({8, 8, 3, 3}, 2);
    const Tensor bias = random_tensor({8}, 3);
    for (auto _ : state)
        benchmark::DoNotOptimize(microseg::kernels::serial::conv2d_forward(input, weight, bias));
}

void bm_map_omp(benchmark::State& state) {
    const Tensor features = random_tensor({16, 64, 64}, 4);
    const auto masks = grid_masks(32, 64, 64);
    for (auto _ : state)
        benchmark::DoNotOptimize(
            microseg::kernels::masked_average_pool(features, masks.data(), 32));
}

void bm_map_serial(benchmark::State& state) {
    const Tensor features = random_tensor({16, 64, 64}, 4);
    const auto masks = grid_masks(32, 64, 64);
    for (auto _ : state)
        benchmark::DoNotOptimize(
            microseg::kernels::serial::masked_average_pool(features, masks.data(), 32));
}

void bm_reorganize_omp(benchmark::State& state) {
    const Tensor logits = random_tensor({32, 24}, 5);
    const auto masks = grid_masks(32, 64, 64);
    for (auto _ : state)
        benchmark::DoNotOptimize(microseg::kernels::reorganize(logits, masks.data(), 64, 64));
}

void bm_reorganize_serial(benchmark::State& state) {
    const Tensor logits = random_tensor({32, 24}, 5);
    const auto masks = grid_masks(32, 64, 64);
    for (auto _ : state)
        benchmark::DoNotOptimize(
            microseg::kernels::serial::reorganize(logits, masks.data(), 64, 64));
}

}  // namespace

BENCHMARK(bm_conv_forward_omp);
BENCHMARK(bm_conv_forward_serial);
BENCHMARK(bm_map_omp);
BENCHMARK(bm_map_serial);
BENCHMARK(bm_reorganize_omp);
BENCHMARK(bm_reorganize_serial);

BENCHMARK_MAIN();
