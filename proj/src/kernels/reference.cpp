#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mcam/kernels.hpp"

namespace mcam::kernels::reference {

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, std::span<const float> a,
          std::span<const float> b, float beta, std::span<float> c) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) {
                const float av = trans_a ? a[p * m + i] : a[i * k + p];
                const float bv = trans_b ? b[j * k + p] : b[p * n + j];
                acc += static_cast<double>(av) * bv;
            }
            const float prev = beta == 0.0f ? 0.0f : beta * c[i * n + j];
            c[i * n + j] = prev + alpha * static_cast<float>(acc);
        }
    }
}

void conv2d_forward(const ConvDims& d, std::span<const float> x, std::span<const float> w,
                    std::span<const float> bias, std::span<float> y) {
    const int64_t ho = d.h_out(), wo = d.w_out();
    for (int64_t n = 0; n < d.n; ++n)
        for (int64_t co = 0; co < d.c_out; ++co)
            for (int64_t oy = 0; oy < ho; ++oy)
                for (int64_t ox = 0; ox < wo; ++ox) {
                    double acc = bias.empty() ? 0.0 : bias[co];
                    for (int64_t ci = 0; ci < d.c_in; ++ci)
                        for (int64_t ky = 0; ky < d.k; ++ky)
                            for (int64_t kx = 0; kx < d.k; ++kx) {
                                const int64_t iy = oy * d.stride - d.pad + ky;
                                const int64_t ix = ox * d.stride - d.pad + kx;
                                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                                acc += static_cast<double>(x[((n * d.c_in + ci) * d.h + iy) * d.w + ix]) *
                                       w[((co * d.c_in + ci) * d.k + ky) * d.k + kx];
                            }
                    y[((n * d.c_out + co) * ho + oy) * wo + ox] = static_cast<float>(acc);
                }
}

void conv2d_backward(const ConvDims& d, std::span<const float> x, std::span<const float> w,
                     std::span<const float> dy, std::span<float> dx, std::span<float> dw,
                     std::span<float> dbias) {
    const int64_t ho = d.h_out(), wo = d.w_out();
    for (int64_t n = 0; n < d.n; ++n)
        for (int64_t co = 0; co < d.c_out; ++co)
            for (int64_t oy = 0; oy < ho; ++oy)
                for (int64_t ox = 0; ox < wo; ++ox) {
                    const float g = dy[((n * d.c_out + co) * ho + oy) * wo + ox];
                    if (!dbias.empty()) dbias[co] += g;
                    for (int64_t ci = 0; ci < d.c_in; ++ci)
                        for (int64_t ky = 0; ky < d.k; ++ky)
                            for (int64_t kx = 0; kx < d.k; ++kx) {
                                const int64_t iy = oy * d.stride - d.pad + ky;
                                const int64_t ix = ox * d.stride - d.pad + kx;
                                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                                const int64_t xi = ((n * d.c_in + ci) * d.h + iy) * d.w + ix;
                                const int64_t wi = ((co * d.c_in + ci) * d.k + ky) * d.k + kx;
                                if (!dx.empty()) dx[xi] += g * w[wi];
                                if (!dw.empty()) dw[wi] += g * x[xi];
                            }
                }
}

void attention_forward(const AttnDims& d, float scale, std::span<const float> q, std::span<const float> k,
                       std::span<const float> v, std::span<float> p, std::span<float> out) {
    for (int64_t b = 0; b < d.batch; ++b)
        for (int64_t i = 0; i < d.len_q; ++i) {
            float* prow = p.data() + (b * d.len_q + i) * d.len_k;
            float mx = -std::numeric_limits<float>::infinity();
            for (int64_t j = 0; j < d.len_k; ++j) {
                double s = 0.0;
                for (int64_t c = 0; c < d.dim; ++c)
                    s += static_cast<double>(q[(b * d.len_q + i) * d.dim + c]) * k[(b * d.len_k + j) * d.dim + c];
                prow[j] = static_cast<float>(s) * scale;
                mx = std::max(mx, prow[j]);
            }
            double z = 0.0;
            for (int64_t j = 0; j < d.len_k; ++j) {
                prow[j] = std::exp(prow[j] - mx);
                z += prow[j];
            }
            for (int64_t j = 0; j < d.len_k; ++j) prow[j] = static_cast<float>(prow[j] / z);
            for (int64_t c = 0; c < d.dim_v; ++c) {
                double acc = 0.0;
                for (int64_t j = 0; j < d.len_k; ++j) acc += static_cast<double>(prow[j]) * v[(b * d.len_k + j) * d.dim_v + c];
                out[(b * d.len_q + i) * d.dim_v + c] = static_cast<float>(acc);
            }
        }
}

void attention_backward(const AttnDims& d, float scale, std::span<const float> q, std::span<const float> k,
                        std::span<const float> v, std::span<const float> p, std::span<const float> dout,
                        std::span<float> dq, std::span<float> dk, std::span<float> dv) {
    std::vector<double> dp(static_cast<size_t>(d.len_k));
    for (int64_t b = 0; b < d.batch; ++b)
        for (int64_t i = 0; i < d.len_q; ++i) {
            const float* prow = p.data() + (b * d.len_q + i) * d.len_k;
            const float* go = dout.data() + (b * d.len_q + i) * d.dim_v;
            double dot = 0.0;
            for (int64_t j = 0; j < d.len_k; ++j) {
                double s = 0.0;
                for (int64_t c = 0; c < d.dim_v; ++c) {
                    s += static_cast<double>(go[c]) * v[(b * d.len_k + j) * d.dim_v + c];
                    dv[(b * d.len_k + j) * d.dim_v + c] += prow[j] * go[c];
                }
                dp[j] = s;
                dot += s * prow[j];
            }
            for (int64_t j = 0; j < d.len_k; ++j) {
                const float ds = static_cast<float>(prow[j] * (dp[j] - dot)) * scale;
                for (int64_t c = 0; c < d.dim; ++c) {
                    dq[(b * d.len_q + i) * d.dim + c] += ds * k[(b * d.len_k + j) * d.dim + c];
                    dk[(b * d.len_k + j) * d.dim + c] += ds * q[(b * d.len_q + i) * d.dim + c];
                }
            }
        }
}

void group_norm_forward(const NormDims& d, float eps, std::span<const float> x, std::span<const float> gamma,
                        std::span<const float> beta, std::span<float> y, std::span<float> mean,
                        std::span<float> rstd) {
    const int64_t cg = d.c / d.groups;
    for (int64_t n = 0; n < d.n; ++n)
        for (int64_t g = 0; g < d.groups; ++g) {
            const int64_t base = (n * d.c + g * cg) * d.spatial;
            const int64_t cnt = cg * d.spatial;
            double s = 0.0, ss = 0.0;
            for (int64_t i = 0; i < cnt; ++i) s += x[base + i];
            const double mu = s / cnt;
            for (int64_t i = 0; i < cnt; ++i) ss += (x[base + i] - mu) * (x[base + i] - mu);
            const double r = 1.0 / std::sqrt(ss / cnt + eps);
            mean[n * d.groups + g] = static_cast<float>(mu);
            rstd[n * d.groups + g] = static_cast<float>(r);
            for (int64_t c = 0; c < cg; ++c) {
                const int64_t ch = g * cg + c;
                for (int64_t s2 = 0; s2 < d.spatial; ++s2) {
                    const int64_t idx = base + c * d.spatial + s2;
                    y[idx] = static_cast<float>((x[idx] - mu) * r) * gamma[ch] + beta[ch];
                }
            }
        }
}

void group_norm_backward(const NormDims& d, std::span<const float> x, std::span<const float> gamma,
                         std::span<const float> mean, std::span<const float> rstd, std::span<const float> dy,
                         std::span<float> dx, std::span<float> dgamma, std::span<float> dbeta) {
    const int64_t cg = d.c / d.groups;
    const int64_t cnt = cg * d.spatial;
    for (int64_t n = 0; n < d.n; ++n)
        for (int64_t g = 0; g < d.groups; ++g) {
            const int64_t base = (n * d.c + g * cg) * d.spatial;
            const double mu = mean[n * d.groups + g], r = rstd[n * d.groups + g];
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int64_t c = 0; c < cg; ++c) {
                const int64_t ch = g * cg + c;
                for (int64_t s = 0; s < d.spatial; ++s) {
                    const int64_t idx = base + c * d.spatial + s;
                    const double xhat = (x[idx] - mu) * r;
                    const double dxhat = static_cast<double>(dy[idx]) * gamma[ch];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    dgamma[ch] += static_cast<float>(dy[idx] * xhat);
                    dbeta[ch] += dy[idx];
                }
            }
            for (int64_t c = 0; c < cg; ++c) {
                const int64_t ch = g * cg + c;
                for (int64_t s = 0; s < d.spatial; ++s) {
                    const int64_t idx = base + c * d.spatial + s;
                    const double xhat = (x[idx] - mu) * r;
                    const double dxhat = static_cast<double>(dy[idx]) * gamma[ch];
                    dx[idx] += static_cast<float>(r / cnt * (cnt * dxhat - sum_dxhat - xhat * sum_dxhat_xhat));
                }
            }
        }
}

void block_match(std::span<const float> prev, std::span<const float> next, int64_t width, int64_t height,
                 int64_t block, int64_t radius, std::span<const int64_t> origin_x,
                 std::span<const int64_t> origin_y, std::span<int32_t> dx, std::span<int32_t> dy) {
    const auto cells_x = static_cast<int64_t>(origin_x.size());
    for (size_t cy = 0; cy < origin_y.size(); ++cy)
        for (int64_t cx = 0; cx < cells_x; ++cx) {
            const int64_t ax = origin_x[cx], ay = origin_y[cy];
            float best = std::numeric_limits<float>::infinity();
            int64_t best_dx = 0, best_dy = 0;
            for (int64_t ddx = -radius; ddx <= radius; ++ddx)
                for (int64_t ddy = -radius; ddy <= radius; ++ddy) {
                    const int64_t bx = ax + ddx, by = ay + ddy;
                    if (bx < 0 || by < 0 || bx + block > width || by + block > height) continue;
                    float s = 0.0f;
                    for (int64_t y = 0; y < block; ++y)
                        for (int64_t x = 0; x < block; ++x)
                            s += std::fabs(prev[(ay + y) * width + ax + x] - next[(by + y) * width + bx + x]);
                    const int64_t mag = ddx * ddx + ddy * ddy, best_mag = best_dx * best_dx + best_dy * best_dy;
                    const bool better = s < best ||
                                        (s == best && (mag < best_mag || (mag == best_mag && (ddx < best_dx ||
                                                                                              (ddx == best_dx && ddy < best_dy)))));
                    if (better) {
                        best = s;
                        best_dx = ddx;
                        best_dy = ddy;
                    }
                }
            dx[cy * cells_x + cx] = static_cast<int32_t>(best_dx);
            dy[cy * cells_x + cx] = static_cast<int32_t>(best_dy);
        }
}

}  // namespace mcam::kernels::reference
