// Parallel kernels against their serial reference loops at desk-model sizes.
#include <benchmark/benchmark.h>

#include <vector>

#include "mcam/kernels.hpp"
#include "mcam/rng.hpp"

namespace k = mcam::kernels;

namespace {

std::vector<float> filled(size_t n, uint64_t seed) {
    mcam::Rng rng(seed);
    std::vector<float> v(n);
    for (float& x : v) x = rng.uniform(-1.0f, 1.0f);
    return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
    const int64_t n = state.range(0);
    const auto a = filled(n * n, 1), b = filled(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel) k::gemm(false, false, n, n, n, 1.0f, a, b, 0.0f, c);
        else k::reference::gemm(false, false, n, n, n, 1.0f, a, b, 0.0f, c);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}

// One 3x3 convolution of an 8-frame batch at the first UNet level.
k::ConvDims conv_dims(int64_t width) { return {8, width, 16, 16, width, 3, 1, 1}; }

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
    const auto d = conv_dims(state.range(0));
    const auto x = filled(d.n * d.c_in * d.h * d.w, 3), w = filled(d.c_out * d.c_in * 9, 4), bias = filled(d.c_out, 5);
    std::vector<float> y(d.n * d.c_out * d.h_out() * d.w_out());
    for (auto _ : state) {
        if constexpr (Parallel) k::conv2d_forward(d, x, w, bias, y);
        else k::reference::conv2d_forward(d, x, w, bias, y);
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
    const auto d = conv_dims(state.range(0));
    const auto x = filled(d.n * d.c_in * d.h * d.w, 3), w = filled(d.c_out * d.c_in * 9, 4);
    const auto dy = filled(d.n * d.c_out * d.h_out() * d.w_out(), 6);
    std::vector<float> dx(x.size()), dw(w.size()), db(d.c_out);
    for (auto _ : state) {
        if constexpr (Parallel) k::conv2d_backward(d, x, w, dy, dx, dw, db);
        else k::reference::conv2d_backward(d, x, w, dy, dx, dw, db);
        benchmark::DoNotOptimize(dx.data());
    }
}

// Spatial self-attention over a 16x16 map, or temporal attention over 8 frames at 256 positions.
template <bool Parallel>
void BM_Attention(benchmark::State& state) {
    const bool temporal = state.range(0) != 0;
    const k::AttnDims d = temporal ? k::AttnDims{256, 8, 8, 32, 32} : k::AttnDims{8, 256, 256, 32, 32};
    const auto q = filled(d.batch * d.len_q * d.dim, 7), kk = filled(d.batch * d.len_k * d.dim, 8);
    const auto v = filled(d.batch * d.len_k * d.dim_v, 9);
    std::vector<float> p(d.batch * d.len_q * d.len_k), out(d.batch * d.len_q * d.dim_v);
    for (auto _ : state) {
        if constexpr (Parallel) k::attention_forward(d, 0.17f, q, kk, v, p, out);
        else k::reference::attention_forward(d, 0.17f, q, kk, v, p, out);
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Parallel>
void BM_GroupNorm(benchmark::State& state) {
    const k::NormDims d{8, 64, 256, 8};
    const auto x = filled(d.n * d.c * d.spatial, 10), g = filled(d.c, 11), b = filled(d.c, 12);
    std::vector<float> y(x.size()), mean(d.n * d.groups), rstd(d.n * d.groups);
    for (auto _ : state) {
        if constexpr (Parallel) k::group_norm_forward(d, 1e-5f, x, g, b, y, mean, rstd);
        else k::reference::group_norm_forward(d, 1e-5f, x, g, b, y, mean, rstd);
        benchmark::DoNotOptimize(y.data());
    }
}

// Flow estimation on one 48x48 frame pair, 8 px blocks, radius 4.
template <bool Parallel>
void BM_BlockMatch(benchmark::State& state) {
    const int64_t size = 48, block = 8, radius = 4;
    const auto a = filled(size * size, 13), b = filled(size * size, 14);
    std::vector<int64_t> origins;
    for (int64_t o = radius; o + block + radius <= size; o += block) origins.push_back(o);
    std::vector<int32_t> dx(origins.size() * origins.size()), dy(dx.size());
    for (auto _ : state) {
        if constexpr (Parallel) k::block_match(a, b, size, size, block, radius, origins, origins, dx, dy);
        else k::reference::block_match(a, b, size, size, block, radius, origins, origins, dx, dy);
        benchmark::DoNotOptimize(dx.data());
    }
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Arg(32)->Arg(64);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->Arg(32)->Arg(64);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->Arg(32);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/reference")->Arg(32);
BENCHMARK(BM_Attention<true>)->Name("attention/parallel")->Arg(0)->Arg(1);
BENCHMARK(BM_Attention<false>)->Name("attention/reference")->Arg(0)->Arg(1);
BENCHMARK(BM_GroupNorm<true>)->Name("group_norm/parallel");
BENCHMARK(BM_GroupNorm<false>)->Name("group_norm/reference");
BENCHMARK(BM_BlockMatch<true>)->Name("block_match/parallel");
BENCHMARK(BM_BlockMatch<false>)->Name("block_match/reference");

BENCHMARK_MAIN();
