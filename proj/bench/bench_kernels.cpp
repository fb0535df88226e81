#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "rramft/kernels.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> dist;
    std::vector<double> v(n);
    for (double& x : v) x = dist(gen);
    return v;
}

// Channels of a desk-scale stage; batch of 32 images.
rramft::ConvGeometry conv_geometry(const benchmark::State& state) {
    rramft::ConvGeometry g;
    g.batch = 32;
    g.in_channels = g.out_channels = static_cast<std::size_t>(state.range(0));
    g.height = g.width = static_cast<std::size_t>(state.range(1));
    g.kernel = 3;
    g.padding = 1;
    return g;
}

template <auto Conv>
void BM_conv_forward(benchmark::State& state) {
    const rramft::ConvGeometry g = conv_geometry(state);
    const auto x = random_values(g.input_numel(), 1);
    const auto w = random_values(g.weight_numel(), 2);
    std::vector<double> y(g.output_numel());
    for (auto _ : state) {
        Conv(g, x, w, y);
        benchmark::DoNotOptimize(y.data());
    }
    const double macs = static_cast<double>(g.output_numel() * g.in_channels * g.kernel * g.kernel);
    state.counters["MAC/s"] = benchmark::Counter(macs, benchmark::Counter::kIsIterationInvariantRate);
}

template <auto Conv>
void BM_conv_backward_weight(benchmark::State& state) {
    const rramft::ConvGeometry g = conv_geometry(state);
    const auto x = random_values(g.input_numel(), 1);
    const auto dy = random_values(g.output_numel(), 3);
    std::vector<double> dw(g.weight_numel());
    for (auto _ : state) {
        Conv(g, x, dy, dw);
        benchmark::DoNotOptimize(dw.data());
    }
}

template <auto Gemm>
void BM_gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_values(n * n, 4);
    const auto b = random_values(n * n, 5);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        Gemm(n, n, n, a, b, c, false);
        benchmark::DoNotOptimize(c.data());
    }
    state.counters["FLOP/s"] =
        benchmark::Counter(2.0 * static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate);
}

void conv_args(benchmark::internal::Benchmark* b) {
    b->Args({8, 12})->Args({16, 6})->Args({32, 3})->Args({16, 32})->Unit(benchmark::kMillisecond);
}

void omp_conv(const rramft::ConvGeometry& g, std::span<const double> x, std::span<const double> w,
              std::span<double> y) {
    rramft::kernels::conv2d_forward(g, x, w, y);
}
void ref_conv(const rramft::ConvGeometry& g, std::span<const double> x, std::span<const double> w,
              std::span<double> y) {
    rramft::reference::conv2d_forward(g, x, w, y);
}
void omp_conv_dw(const rramft::ConvGeometry& g, std::span<const double> x, std::span<const double> dy,
                 std::span<double> dw) {
    rramft::kernels::conv2d_backward_weight(g, x, dy, dw);
}
void ref_conv_dw(const rramft::ConvGeometry& g, std::span<const double> x, std::span<const double> dy,
                 std::span<double> dw) {
    rramft::reference::conv2d_backward_weight(g, x, dy, dw);
}
void omp_gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a, std::span<const double> b,
              std::span<double> c, bool acc) {
    rramft::kernels::gemm(m, n, k, a, b, c, acc);
}
void ref_gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a, std::span<const double> b,
              std::span<double> c, bool acc) {
    rramft::reference::gemm(m, n, k, a, b, c, acc);
}

} // namespace

BENCHMARK(BM_conv_forward<omp_conv>)->Name("conv_forward/omp")->Apply(conv_args);
BENCHMARK(BM_conv_forward<ref_conv>)->Name("conv_forward/reference")->Apply(conv_args);
BENCHMARK(BM_conv_backward_weight<omp_conv_dw>)->Name("conv_backward_weight/omp")->Apply(conv_args);
BENCHMARK(BM_conv_backward_weight<ref_conv_dw>)->Name("conv_backward_weight/reference")->Apply(conv_args);
BENCHMARK(BM_gemm<omp_gemm>)->Name("gemm/omp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_gemm<ref_gemm>)->Name("gemm/reference")->RangeMultiplier(2)->Range(32, 256);

BENCHMARK_MAIN();
