// Serial reference vs OpenMP kernels on training-sized batches.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include <vector>

#include "bae/kernels.hpp"
#include "bae/rng.hpp"

namespace k = bae::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    bae::Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = bae::uniform01(rng) - 0.5;
    return v;
}

// batch 50 through the first CIFAR conv (3x32x32 -> 8x16x16, k4 s2 p1)
k::ConvDims conv_dims(std::size_t batch) { return {batch, 3, 32, 32, 8, 16, 16, 4, 2, 1}; }

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
    const auto d = conv_dims(static_cast<std::size_t>(state.range(0)));
    const auto x = random_vec(d.batch * 3 * 32 * 32, 1), w = random_vec(8 * 3 * 16, 2), b = random_vec(8, 3);
    std::vector<double> y(d.batch * 8 * 16 * 16);
    for (auto _ : state) {
        if constexpr (Parallel) k::parallel::conv2d_forward(d, x, w, b, y);
        else k::serial::conv2d_forward(d, x, w, b, y);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
    const auto d = conv_dims(static_cast<std::size_t>(state.range(0)));
    const auto x = random_vec(d.batch * 3 * 32 * 32, 1), w = random_vec(8 * 3 * 16, 2);
    const auto gy = random_vec(d.batch * 8 * 16 * 16, 4);
    std::vector<double> gx(x.size()), gw(w.size()), gb(8);
    for (auto _ : state) {
        if constexpr (Parallel) k::parallel::conv2d_backward(d, x, w, gy, gx, gw, gb);
        else k::serial::conv2d_backward(d, x, w, gy, gx, gw, gb);
        benchmark::DoNotOptimize(gx.data());
    }
}

// first layer of the dense Fashion-MNIST encoder
template <bool Parallel>
void BM_DenseForwardBackward(benchmark::State& state) {
    const k::DenseDims d{static_cast<std::size_t>(state.range(0)), 784, 512};
    const auto x = random_vec(d.batch * d.in, 5), w = random_vec(d.in * d.out, 6), b = random_vec(d.out, 7);
    const auto gy = random_vec(d.batch * d.out, 8);
    std::vector<double> y(d.batch * d.out), gx(x.size()), gw(w.size()), gb(d.out);
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::parallel::dense_forward(d, x, w, b, y);
            k::parallel::dense_backward(d, x, w, gy, gx, gw, gb);
        } else {
            k::serial::dense_forward(d, x, w, b, y);
            k::serial::dense_backward(d, x, w, gy, gx, gw, gb);
        }
        benchmark::DoNotOptimize(gw.data());
    }
}

// K-means assignment step: 10 centroids in a 50-d latent space
template <bool Parallel>
void BM_NearestCentroid(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0)), kc = 10, dim = 50;
    const auto pts = random_vec(n * dim, 9), cent = random_vec(kc * dim, 10);
    std::vector<int> assign(n);
    std::vector<double> dist(n);
    for (auto _ : state) {
        if constexpr (Parallel) k::parallel::nearest_centroid(n, kc, dim, pts, cent, assign, dist);
        else k::serial::nearest_centroid(n, kc, dim, pts, cent, assign, dist);
        benchmark::DoNotOptimize(dist.data());
    }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Arg(50);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Arg(50);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->Arg(50);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->Arg(50);
BENCHMARK(BM_DenseForwardBackward<false>)->Name("dense_fwd_bwd/serial")->Arg(50);
BENCHMARK(BM_DenseForwardBackward<true>)->Name("dense_fwd_bwd/parallel")->Arg(50);
BENCHMARK(BM_NearestCentroid<false>)->Name("nearest_centroid/serial")->Arg(10000);
BENCHMARK(BM_NearestCentroid<true>)->Name("nearest_centroid/parallel")->Arg(10000);

BENCHMARK_MAIN();
