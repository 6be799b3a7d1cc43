#pragma once

// Compute kernels behind the autograd ops. Each kernel has an OpenMP-parallel
// implementation in mcam::kernels and a plain serial loop version in
// mcam::kernels::reference; tests check the two agree and bench/ times them.
//
// All tensors are row-major float spans; dimensions are passed explicitly.

#include <cstdint>
#include <span>

namespace mcam::kernels {

struct ConvDims {
    int64_t n = 1, c_in = 1, h = 1, w = 1;
    int64_t c_out = 1, k = 3, stride = 1, pad = 1;

    int64_t h_out() const { return (h + 2 * pad - k) / stride + 1; }
    int64_t w_out() const { return (w + 2 * pad - k) / stride + 1; }
};

struct AttnDims {
    int64_t batch = 1, len_q = 1, len_k = 1, dim = 1, dim_v = 1;
};

struct NormDims {
    int64_t n = 1, c = 1, spatial = 1, groups = 1;
};

// Number of worker threads the parallel kernels will use.
int max_threads();
void set_threads(int n);

// C[m x n] = alpha * op(A) * op(B) + beta * C, op = optional transpose.
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, std::span<const float> a,
          std::span<const float> b, float beta, std::span<float> c);

// y[N, Cout, Ho, Wo] = conv(x, w) + bias. bias may be empty.
void conv2d_forward(const ConvDims& d, std::span<const float> x, std::span<const float> w,
                    std::span<const float> bias, std::span<float> y);
// Any of dx/dw/dbias may be empty to skip that gradient; gradients are accumulated (+=).
void conv2d_backward(const ConvDims& d, std::span<const float> x, std::span<const float> w,
                     std::span<const float> dy, std::span<float> dx, std::span<float> dw,
                     std::span<float> dbias);

// Scaled dot-product attention, probabilities written to p[batch, len_q, len_k].
void attention_forward(const AttnDims& d, float scale, std::span<const float> q, std::span<const float> k,
                       std::span<const float> v, std::span<float> p, std::span<float> out);
// Gradients are accumulated (+=).
void attention_backward(const AttnDims& d, float scale, std::span<const float> q, std::span<const float> k,
                        std::span<const float> v, std::span<const float> p, std::span<const float> dout,
                        std::span<float> dq, std::span<float> dk, std::span<float> dv);

// Group normalization over (channels-in-group x spatial). mean/rstd are [n, groups].
void group_norm_forward(const NormDims& d, float eps, std::span<const float> x, std::span<const float> gamma,
                        std::span<const float> beta, std::span<float> y, std::span<float> mean,
                        std::span<float> rstd);
void group_norm_backward(const NormDims& d, std::span<const float> x, std::span<const float> gamma,
                         std::span<const float> mean, std::span<const float> rstd, std::span<const float> dy,
                         std::span<float> dx, std::span<float> dgamma, std::span<float> dbeta);

// Sum of absolute differences between a block of `a` at (ax, ay) and `b` at (bx, by),
// single-channel planes of width `stride`.
float block_sad(std::span<const float> a, std::span<const float> b, int64_t stride, int64_t ax, int64_t ay,
                int64_t bx, int64_t by, int64_t block);

// Exhaustive block matching between two single-channel planes. One result per grid
// cell (cells_x * cells_y); cell origins are origin_x[i], origin_y[j]. Out-of-frame
// candidates are skipped. Ties in SAD go to the smaller |d|^2, then lexicographic (dx, dy).
void block_match(std::span<const float> prev, std::span<const float> next, int64_t width, int64_t height,
                 int64_t block, int64_t radius, std::span<const int64_t> origin_x,
                 std::span<const int64_t> origin_y, std::span<int32_t> dx, std::span<int32_t> dy);

namespace reference {

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, std::span<const float> a,
          std::span<const float> b, float beta, std::span<float> c);
void conv2d_forward(const ConvDims& d, std::span<const float> x, std::span<const float> w,
                    std::span<const float> bias, std::span<float> y);
void conv2d_backward(const ConvDims& d, std::span<const float> x, std::span<const float> w,
                     std::span<const float> dy, std::span<float> dx, std::span<float> dw,
                     std::span<float> dbias);
void attention_forward(const AttnDims& d, float scale, std::span<const float> q, std::span<const float> k,
                       std::span<const float> v, std::span<float> p, std::span<float> out);
void attention_backward(const AttnDims& d, float scale, std::span<const float> q, std::span<const float> k,
                        std::span<const float> v, std::span<const float> p, std::span<const float> dout,
                        std::span<float> dq, std::span<float> dk, std::span<float> dv);
void group_norm_forward(const NormDims& d, float eps, std::span<const float> x, std::span<const float> gamma,
                        std::span<const float> beta, std::span<float> y, std::span<float> mean,
                        std::span<float> rstd);
void group_norm_backward(const NormDims& d, std::span<const float> x, std::span<const float> gamma,
                         std::span<const float> mean, std::span<const float> rstd, std::span<const float> dy,
                         std::span<float> dx, std::span<float> dgamma, std::span<float> dbeta);
void block_match(std::span<const float> prev, std::span<const float> next, int64_t width, int64_t height,
                 int64_t block, int64_t radius, std::span<const int64_t> origin_x,
                 std::span<const int64_t> origin_y, std::span<int32_t> dx, std::span<int32_t> dy);

}  // namespace reference
}  // namespace mcam::kernels
