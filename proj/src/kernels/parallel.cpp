#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mcam/kernels.hpp"

namespace mcam::kernels {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

int g_threads = 0;

// Unfold one sample [C, H, W] into columns [C*k*k, Ho*Wo].
void im2col(const ConvDims& d, const float* x, float* col) {
    const int64_t ho = d.h_out(), wo = d.w_out();
    for (int64_t c = 0; c < d.c_in; ++c)
        for (int64_t ky = 0; ky < d.k; ++ky)
            for (int64_t kx = 0; kx < d.k; ++kx) {
                float* row = col + ((c * d.k + ky) * d.k + kx) * ho * wo;
                const float* plane = x + c * d.h * d.w;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * d.stride - d.pad + ky;
                    float* out = row + oy * wo;
                    if (iy < 0 || iy >= d.h) {
                        std::fill(out, out + wo, 0.0f);
                        continue;
                    }
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * d.stride - d.pad + kx;
                        out[ox] = (ix < 0 || ix >= d.w) ? 0.0f : plane[iy * d.w + ix];
                    }
                }
            }
}

void col2im(const ConvDims& d, const float* col, float* dx) {
    const int64_t ho = d.h_out(), wo = d.w_out();
    for (int64_t c = 0; c < d.c_in; ++c)
        for (int64_t ky = 0; ky < d.k; ++ky)
            for (int64_t kx = 0; kx < d.k; ++kx) {
                const float* row = col + ((c * d.k + ky) * d.k + kx) * ho * wo;
                float* plane = dx + c * d.h * d.w;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * d.stride - d.pad + ky;
                    if (iy < 0 || iy >= d.h) continue;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * d.stride - d.pad + kx;
                        if (ix >= 0 && ix < d.w) plane[iy * d.w + ix] += row[oy * wo + ox];
                    }
                }
            }
}

bool is_pointwise(const ConvDims& d) { return d.k == 1 && d.stride == 1 && d.pad == 0; }

}  // namespace

int max_threads() {
#ifdef _OPENMP
    return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
    return 1;
#endif
}

void set_threads(int n) { g_threads = n; }

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, float alpha, std::span<const float> a,
          std::span<const float> b, float beta, std::span<float> c) {
    MapRow cm(c.data(), m, n);
    if (beta == 0.0f)
        cm.setZero();
    else if (beta != 1.0f)
        cm *= beta;
    if (!trans_a && !trans_b)
        cm.noalias() += alpha * (CMapRow(a.data(), m, k) * CMapRow(b.data(), k, n));
    else if (!trans_a && trans_b)
        cm.noalias() += alpha * (CMapRow(a.data(), m, k) * CMapRow(b.data(), n, k).transpose());
    else if (trans_a && !trans_b)
        cm.noalias() += alpha * (CMapRow(a.data(), k, m).transpose() * CMapRow(b.data(), k, n));
    else
        cm.noalias() += alpha * (CMapRow(a.data(), k, m).transpose() * CMapRow(b.data(), n, k).transpose());
}

void conv2d_forward(const ConvDims& d, std::span<const float> x, std::span<const float> w,
                    std::span<const float> bias, std::span<float> y) {
    const int64_t ho = d.h_out(), wo = d.w_out(), hw = ho * wo, kk = d.c_in * d.k * d.k;
    const int64_t in_sz = d.c_in * d.h * d.w, out_sz = d.c_out * hw;
    const bool pointwise = is_pointwise(d);
#pragma omp parallel num_threads(max_threads()) if (d.n > 1)
    {
        std::vector<float> col(pointwise ? 0 : static_cast<size_t>(kk * hw));
#pragma omp for schedule(static)
        for (int64_t n = 0; n < d.n; ++n) {
            const float* src = x.data() + n * in_sz;
            if (!pointwise) {
                im2col(d, src, col.data());
                src = col.data();
            }
            MapRow out(y.data() + n * out_sz, d.c_out, hw);
            out.noalias() = CMapRow(w.data(), d.c_out, kk) * CMapRow(src, kk, hw);
            if (!bias.empty())
                for (int64_t co = 0; co < d.c_out; ++co) out.row(co).array() += bias[co];
        }
    }
}

void conv2d_backward(const ConvDims& d, std::span<const float> x, std::span<const float> w,
                     std::span<const float> dy, std::span<float> dx, std::span<float> dw,
                     std::span<float> dbias) {
    const int64_t ho = d.h_out(), wo = d.w_out(), hw = ho * wo, kk = d.c_in * d.k * d.k;
    const int64_t in_sz = d.c_in * d.h * d.w, out_sz = d.c_out * hw;
    const bool pointwise = is_pointwise(d);
    const int threads = std::max(1, std::min<int>(max_threads(), static_cast<int>(d.n)));
    // Per-thread weight-gradient partials reduced in thread order afterwards.
    std::vector<std::vector<float>> dw_part(static_cast<size_t>(dw.empty() ? 0 : threads));
#pragma omp parallel num_threads(threads) if (threads > 1)
    {
        int tid = 0;
#ifdef _OPENMP
        tid = omp_get_thread_num();
#endif
        std::vector<float> col(pointwise ? 0 : static_cast<size_t>(kk * hw));
        std::vector<float> dcol(pointwise || dx.empty() ? 0 : static_cast<size_t>(kk * hw));
        if (!dw.empty()) dw_part[tid].assign(static_cast<size_t>(d.c_out * kk), 0.0f);
#pragma omp for schedule(static)
        for (int64_t n = 0; n < d.n; ++n) {
            CMapRow g(dy.data() + n * out_sz, d.c_out, hw);
            if (!dw.empty()) {
                const float* src = x.data() + n * in_sz;
                if (!pointwise) {
                    im2col(d, src, col.data());
                    src = col.data();
                }
                MapRow(dw_part[tid].data(), d.c_out, kk).noalias() += g * CMapRow(src, kk, hw).transpose();
            }
            if (!dx.empty()) {
                if (pointwise) {
                    MapRow(dx.data() + n * in_sz, kk, hw).noalias() += CMapRow(w.data(), d.c_out, kk).transpose() * g;
                } else {
                    MapRow(dcol.data(), kk, hw).noalias() = CMapRow(w.data(), d.c_out, kk).transpose() * g;
                    col2im(d, dcol.data(), dx.data() + n * in_sz);
                }
            }
        }
    }
    for (const auto& part : dw_part)
        for (size_t i = 0; i < part.size(); ++i) dw[i] += part[i];
    if (!dbias.empty())
        for (int64_t n = 0; n < d.n; ++n)
            for (int64_t co = 0; co < d.c_out; ++co) {
                const float* row = dy.data() + n * out_sz + co * hw;
                float s = 0.0f;
                for (int64_t i = 0; i < hw; ++i) s += row[i];
                dbias[co] += s;
            }
}

void attention_forward(const AttnDims& d, float scale, std::span<const float> q, std::span<const float> k,
                       std::span<const float> v, std::span<float> p, std::span<float> out) {
#pragma omp parallel for num_threads(max_threads()) schedule(static) if (d.batch > 1)
    for (int64_t b = 0; b < d.batch; ++b) {
        CMapRow qb(q.data() + b * d.len_q * d.dim, d.len_q, d.dim);
        CMapRow kb(k.data() + b * d.len_k * d.dim, d.len_k, d.dim);
        CMapRow vb(v.data() + b * d.len_k * d.dim_v, d.len_k, d.dim_v);
        MapRow pb(p.data() + b * d.len_q * d.len_k, d.len_q, d.len_k);
        pb.noalias() = (qb * kb.transpose()) * scale;
        // Scalar softmax: Eigen's vectorized exp and sum depend on buffer alignment.
        for (int64_t i = 0; i < d.len_q; ++i) {
            float* row = pb.data() + i * d.len_k;
            const float mx = *std::max_element(row, row + d.len_k);
            float sum = 0.0f;
            for (int64_t j = 0; j < d.len_k; ++j) sum += (row[j] = std::exp(row[j] - mx));
            for (int64_t j = 0; j < d.len_k; ++j) row[j] /= sum;
        }
        MapRow(out.data() + b * d.len_q * d.dim_v, d.len_q, d.dim_v).noalias() = pb * vb;
    }
}

void attention_backward(const AttnDims& d, float scale, std::span<const float> q, std::span<const float> k,
                        std::span<const float> v, std::span<const float> p, std::span<const float> dout,
                        std::span<float> dq, std::span<float> dk, std::span<float> dv) {
#pragma omp parallel num_threads(max_threads()) if (d.batch > 1)
    {
        RowMat ds(d.len_q, d.len_k);
#pragma omp for schedule(static)
        for (int64_t b = 0; b < d.batch; ++b) {
            CMapRow qb(q.data() + b * d.len_q * d.dim, d.len_q, d.dim);
            CMapRow kb(k.data() + b * d.len_k * d.dim, d.len_k, d.dim);
            CMapRow vb(v.data() + b * d.len_k * d.dim_v, d.len_k, d.dim_v);
            CMapRow pb(p.data() + b * d.len_q * d.len_k, d.len_q, d.len_k);
            CMapRow go(dout.data() + b * d.len_q * d.dim_v, d.len_q, d.dim_v);
            MapRow(dv.data() + b * d.len_k * d.dim_v, d.len_k, d.dim_v).noalias() += pb.transpose() * go;
            ds.noalias() = go * vb.transpose();
            for (int64_t i = 0; i < d.len_q; ++i) {
                float* dr = ds.data() + i * d.len_k;
                const float* pr = pb.data() + i * d.len_k;
                float dot = 0.0f;
                for (int64_t j = 0; j < d.len_k; ++j) dot += dr[j] * pr[j];
                for (int64_t j = 0; j < d.len_k; ++j) dr[j] = pr[j] * (dr[j] - dot) * scale;
            }
            MapRow(dq.data() + b * d.len_q * d.dim, d.len_q, d.dim).noalias() += ds * kb;
            MapRow(dk.data() + b * d.len_k * d.dim, d.len_k, d.dim).noalias() += ds.transpose() * qb;
        }
    }
}

void group_norm_forward(const NormDims& d, float eps, std::span<const float> x, std::span<const float> gamma,
                        std::span<const float> beta, std::span<float> y, std::span<float> mean,
                        std::span<float> rstd) {
    const int64_t cg = d.c / d.groups, cnt = cg * d.spatial;
#pragma omp parallel for num_threads(max_threads()) schedule(static) if (d.n > 1)
    for (int64_t n = 0; n < d.n; ++n)
        for (int64_t g = 0; g < d.groups; ++g) {
            const int64_t base = (n * d.c + g * cg) * d.spatial;
            const float* xs = x.data() + base;
            double s = 0.0, ss = 0.0;
            for (int64_t i = 0; i < cnt; ++i) s += xs[i];
            const double mu = s / static_cast<double>(cnt);
            for (int64_t i = 0; i < cnt; ++i) ss += (xs[i] - mu) * (xs[i] - mu);
            const double r = 1.0 / std::sqrt(ss / static_cast<double>(cnt) + eps);
            mean[n * d.groups + g] = static_cast<float>(mu);
            rstd[n * d.groups + g] = static_cast<float>(r);
            for (int64_t c = 0; c < cg; ++c) {
                const int64_t ch = g * cg + c;
                const float a = static_cast<float>(r) * gamma[ch];
                const float b = beta[ch] - static_cast<float>(mu * r) * gamma[ch];
                const float* xr = xs + c * d.spatial;
                float* yr = y.data() + base + c * d.spatial;
                for (int64_t s2 = 0; s2 < d.spatial; ++s2) yr[s2] = xr[s2] * a + b;
            }
        }
}

void group_norm_backward(const NormDims& d, std::span<const float> x, std::span<const float> gamma,
                         std::span<const float> mean, std::span<const float> rstd, std::span<const float> dy,
                         std::span<float> dx, std::span<float> dgamma, std::span<float> dbeta) {
    const int64_t cg = d.c / d.groups, cnt = cg * d.spatial;
    // Per-sample channel partials so the affine-parameter reduction has a fixed order.
    std::vector<double> pg(static_cast<size_t>(d.n * d.c)), pb(static_cast<size_t>(d.n * d.c));
#pragma omp parallel for num_threads(max_threads()) schedule(static) if (d.n > 1)
    for (int64_t n = 0; n < d.n; ++n)
        for (int64_t g = 0; g < d.groups; ++g) {
            const int64_t base = (n * d.c + g * cg) * d.spatial;
            const double mu = mean[n * d.groups + g], r = rstd[n * d.groups + g];
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int64_t c = 0; c < cg; ++c) {
                const int64_t ch = g * cg + c;
                double sg = 0.0, sb = 0.0;
                for (int64_t s = 0; s < d.spatial; ++s) {
                    const int64_t idx = base + c * d.spatial + s;
                    const double xhat = (x[idx] - mu) * r;
                    sg += dy[idx] * xhat;
                    sb += dy[idx];
                }
                pg[n * d.c + ch] = sg;
                pb[n * d.c + ch] = sb;
                sum_dxhat += sb * gamma[ch];
                sum_dxhat_xhat += sg * gamma[ch];
            }
            const double inv = 1.0 / static_cast<double>(cnt);
            for (int64_t c = 0; c < cg; ++c) {
                const int64_t ch = g * cg + c;
                for (int64_t s = 0; s < d.spatial; ++s) {
                    const int64_t idx = base + c * d.spatial + s;
                    const double xhat = (x[idx] - mu) * r;
                    const double dxhat = static_cast<double>(dy[idx]) * gamma[ch];
                    dx[idx] += static_cast<float>(r * (dxhat - inv * (sum_dxhat + xhat * sum_dxhat_xhat)));
                }
            }
        }
    for (int64_t n = 0; n < d.n; ++n)
        for (int64_t ch = 0; ch < d.c; ++ch) {
            dgamma[ch] += static_cast<float>(pg[n * d.c + ch]);
            dbeta[ch] += static_cast<float>(pb[n * d.c + ch]);
        }
}

float block_sad(std::span<const float> a, std::span<const float> b, int64_t stride, int64_t ax, int64_t ay,
                int64_t bx, int64_t by, int64_t block) {
    float s = 0.0f;
    for (int64_t y = 0; y < block; ++y) {
        const float* ra = a.data() + (ay + y) * stride + ax;
        const float* rb = b.data() + (by + y) * stride + bx;
        for (int64_t x = 0; x < block; ++x) s += std::fabs(ra[x] - rb[x]);
    }
    return s;
}

void block_match(std::span<const float> prev, std::span<const float> next, int64_t width, int64_t height,
                 int64_t block, int64_t radius, std::span<const int64_t> origin_x,
                 std::span<const int64_t> origin_y, std::span<int32_t> dx, std::span<int32_t> dy) {
    const auto cells_x = static_cast<int64_t>(origin_x.size());
    const auto cells = cells_x * static_cast<int64_t>(origin_y.size());
#pragma omp parallel for num_threads(max_threads()) schedule(static) if (cells > 16)
    for (int64_t cell = 0; cell < cells; ++cell) {
        const int64_t ax = origin_x[cell % cells_x], ay = origin_y[cell / cells_x];
        float best = std::numeric_limits<float>::infinity();
        int64_t best_dx = 0, best_dy = 0;
        for (int64_t ddx = -radius; ddx <= radius; ++ddx)
            for (int64_t ddy = -radius; ddy <= radius; ++ddy) {
                const int64_t bx = ax + ddx, by = ay + ddy;
                if (bx < 0 || by < 0 || bx + block > width || by + block > height) continue;
                const float s = block_sad(prev, next, width, ax, ay, bx, by, block);
                const int64_t mag = ddx * ddx + ddy * ddy, best_mag = best_dx * best_dx + best_dy * best_dy;
                if (s < best || (s == best && (mag < best_mag || (mag == best_mag && (ddx < best_dx ||
                                                                                       (ddx == best_dx && ddy < best_dy)))))) {
                    best = s;
                    best_dx = ddx;
                    best_dy = ddy;
                }
            }
        dx[cell] = static_cast<int32_t>(best_dx);
        dy[cell] = static_cast<int32_t>(best_dy);
    }
}

}  // namespace mcam::kernels
