#include "doctest.h"

#include <tuple>
#include <vector>

#include "mcam/kernels.hpp"
#include "mcam/rng.hpp"

using namespace mcam;
namespace k = mcam::kernels;

namespace {

std::vector<float> random_vec(Rng& rng, int64_t n) {
    std::vector<float> v(static_cast<size_t>(n));
    for (auto& x : v) x = rng.normal();
    return v;
}

float max_diff(const std::vector<float>& a, const std::vector<float>& b) {
    float m = 0.0f;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("gemm matches reference for every transpose combination") {
    Rng rng(1);
    const int64_t m = 7, n = 5, kk = 11;
    auto a = random_vec(rng, m * kk), b = random_vec(rng, kk * n);
    for (bool ta : {false, true})
        for (bool tb : {false, true}) {
            std::vector<float> c1 = random_vec(rng, m * n), c2 = c1;
            k::gemm(ta, tb, m, n, kk, 0.5f, a, b, 1.0f, c1);
            k::reference::gemm(ta, tb, m, n, kk, 0.5f, a, b, 1.0f, c2);
            CHECK(max_diff(c1, c2) < 1e-4f);
        }
}

TEST_CASE("conv2d forward and backward match reference") {
    Rng rng(2);
    for (auto [kk, stride, pad] : std::vector<std::tuple<int64_t, int64_t, int64_t>>{{3, 1, 1}, {3, 2, 1}, {1, 1, 0}}) {
        k::ConvDims d{3, 4, 9, 8, 5, kk, stride, pad};
        auto x = random_vec(rng, d.n * d.c_in * d.h * d.w);
        auto w = random_vec(rng, d.c_out * d.c_in * d.k * d.k);
        auto b = random_vec(rng, d.c_out);
        const int64_t ny = d.n * d.c_out * d.h_out() * d.w_out();
        std::vector<float> y1(ny), y2(ny);
        k::conv2d_forward(d, x, w, b, y1);
        k::reference::conv2d_forward(d, x, w, b, y2);
        CHECK(max_diff(y1, y2) < 1e-4f);

        auto dy = random_vec(rng, ny);
        std::vector<float> dx1(x.size()), dx2(x.size()), dw1(w.size()), dw2(w.size()), db1(b.size()), db2(b.size());
        k::conv2d_backward(d, x, w, dy, dx1, dw1, db1);
        k::reference::conv2d_backward(d, x, w, dy, dx2, dw2, db2);
        CHECK(max_diff(dx1, dx2) < 1e-4f);
        CHECK(max_diff(dw1, dw2) < 1e-3f);
        CHECK(max_diff(db1, db2) < 1e-4f);
    }
}

TEST_CASE("attention forward and backward match reference") {
    Rng rng(3);
    k::AttnDims d{4, 6, 5, 3, 2};
    auto q = random_vec(rng, d.batch * d.len_q * d.dim);
    auto kv = random_vec(rng, d.batch * d.len_k * d.dim);
    auto v = random_vec(rng, d.batch * d.len_k * d.dim_v);
    std::vector<float> p1(d.batch * d.len_q * d.len_k), p2(p1.size()), o1(d.batch * d.len_q * d.dim_v), o2(o1.size());
    k::attention_forward(d, 0.7f, q, kv, v, p1, o1);
    k::reference::attention_forward(d, 0.7f, q, kv, v, p2, o2);
    CHECK(max_diff(p1, p2) < 1e-5f);
    CHECK(max_diff(o1, o2) < 1e-5f);
    auto go = random_vec(rng, static_cast<int64_t>(o1.size()));
    std::vector<float> dq1(q.size()), dq2(q.size()), dk1(kv.size()), dk2(kv.size()), dv1(v.size()), dv2(v.size());
    k::attention_backward(d, 0.7f, q, kv, v, p1, go, dq1, dk1, dv1);
    k::reference::attention_backward(d, 0.7f, q, kv, v, p2, go, dq2, dk2, dv2);
    CHECK(max_diff(dq1, dq2) < 1e-5f);
    CHECK(max_diff(dk1, dk2) < 1e-5f);
    CHECK(max_diff(dv1, dv2) < 1e-5f);
}

TEST_CASE("group norm forward and backward match reference") {
    Rng rng(4);
    k::NormDims d{3, 8, 10, 4};
    auto x = random_vec(rng, d.n * d.c * d.spatial);
    auto g = random_vec(rng, d.c), b = random_vec(rng, d.c);
    std::vector<float> y1(x.size()), y2(x.size()), m1(d.n * d.groups), m2(m1.size()), r1(m1.size()), r2(m1.size());
    k::group_norm_forward(d, 1e-5f, x, g, b, y1, m1, r1);
    k::reference::group_norm_forward(d, 1e-5f, x, g, b, y2, m2, r2);
    CHECK(max_diff(y1, y2) < 1e-5f);
    auto dy = random_vec(rng, static_cast<int64_t>(x.size()));
    std::vector<float> dx1(x.size()), dx2(x.size()), dg1(d.c), dg2(d.c), db1(d.c), db2(d.c);
    k::group_norm_backward(d, x, g, m1, r1, dy, dx1, dg1, db1);
    k::reference::group_norm_backward(d, x, g, m2, r2, dy, dx2, dg2, db2);
    CHECK(max_diff(dx1, dx2) < 1e-4f);
    CHECK(max_diff(dg1, dg2) < 1e-4f);
    CHECK(max_diff(db1, db2) < 1e-4f);
}

TEST_CASE("block matching agrees with reference bit for bit, including ties") {
    Rng rng(5);
    const int64_t w = 32, h = 24;
    auto a = random_vec(rng, w * h);
    std::vector<float> b(a.size(), 0.0f);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) b[y * w + x] = a[y * w + std::max<int64_t>(0, x - 2)];
    std::vector<int64_t> ox{4, 12, 20}, oy{4, 12};
    std::vector<int32_t> dx1(6), dy1(6), dx2(6), dy2(6);
    k::block_match(a, b, w, h, 8, 4, ox, oy, dx1, dy1);
    k::reference::block_match(a, b, w, h, 8, 4, ox, oy, dx2, dy2);
    CHECK(dx1 == dx2);
    CHECK(dy1 == dy2);
    CHECK(dx1[0] == 2);
    // Flat planes tie everywhere: smallest displacement wins.
    std::vector<float> flat(a.size(), 0.5f);
    k::block_match(flat, flat, w, h, 8, 4, ox, oy, dx1, dy1);
    for (size_t i = 0; i < 6; ++i) CHECK((dx1[i] == 0 && dy1[i] == 0));
}
