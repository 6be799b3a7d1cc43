#include "mcam/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "mcam/errors.hpp"
#include "mcam/kernels.hpp"

namespace mcam::ag {

namespace {

thread_local bool t_grad_enabled = true;

using NodePtr = std::shared_ptr<Node>;

template <typename Inputs>
Var make_result_impl(Tensor value, const Inputs& inputs, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    bool record = false;
    if (t_grad_enabled)
        for (const Var* v : inputs) record = record || (v->defined() && v->requires_grad());
    if (record) {
        node->requires_grad = true;
        for (const Var* v : inputs) node->inputs.push_back(v->defined() ? v->node() : nullptr);
        node->backward_fn = std::move(fn);
    }
    return Var(std::move(node));
}

Var make_result(Tensor value, std::initializer_list<const Var*> inputs, std::function<void(Node&)> fn) {
    return make_result_impl(std::move(value), inputs, std::move(fn));
}

Var make_result(Tensor value, const std::vector<const Var*>& inputs, std::function<void(Node&)> fn) {
    return make_result_impl(std::move(value), inputs, std::move(fn));
}

// Gradient accumulator for input i, or nullptr when that input needs none.
Tensor* grad_of(Node& self, size_t i) {
    auto& in = self.inputs[i];
    if (!in || !in->requires_grad) return nullptr;
    return &in->ensure_grad();
}

const Tensor& input_value(Node& self, size_t i) { return self.inputs[i]->value; }

void require_shape(const Var& v, const Shape& s, const char* what) {
    if (v.shape() != s)
        throw DimensionError(std::string(what) + ": expected " + shape_str(s) + ", got " + shape_str(v.shape()));
}

void require_same(const Var& a, const Var& b, const char* what) { require_shape(b, a.shape(), what); }

}  // namespace

Tensor& Node::ensure_grad() {
    if (grad.shape() != value.shape()) grad = Tensor::zeros(value.shape());
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

bool grad_enabled() { return t_grad_enabled; }
NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }

void backward(const Var& root) {
    if (root.value().numel() != 1) throw DimensionError("backward: root must be a scalar");
    if (!root.requires_grad()) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<Node*, size_t>> stack{{root.node().get(), 0}};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->inputs.size()) {
            Node* child = node->inputs[idx++].get();
            if (child && child->requires_grad && child->backward_fn && seen.insert(child).second)
                stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->ensure_grad().fill(1.0f);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
    // Release intermediate buffers; parameters (no backward_fn) keep their grads.
    for (Node* n : order)
        if (n->backward_fn) {
            n->grad = Tensor();
            n->backward_fn = nullptr;
            n->inputs.clear();
        }
}

Var constant(Tensor t) { return Var(std::move(t), false); }

Var add(const Var& a, const Var& b) {
    require_same(a, b, "add");
    return make_result(a.value() + b.value(), {&a, &b}, [](Node& s) {
        for (size_t i = 0; i < 2; ++i)
            if (auto* g = grad_of(s, i)) axpy_inplace(*g, 1.0f, s.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same(a, b, "sub");
    return make_result(a.value() - b.value(), {&a, &b}, [](Node& s) {
        if (auto* g = grad_of(s, 0)) axpy_inplace(*g, 1.0f, s.grad);
        if (auto* g = grad_of(s, 1)) axpy_inplace(*g, -1.0f, s.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    require_same(a, b, "mul");
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    return make_result(std::move(out), {&a, &b}, [](Node& s) {
        const Tensor& av = input_value(s, 0);
        const Tensor& bv = input_value(s, 1);
        if (auto* g = grad_of(s, 0))
            for (int64_t i = 0; i < g->numel(); ++i) (*g)[i] += s.grad[i] * bv[i];
        if (auto* g = grad_of(s, 1))
            for (int64_t i = 0; i < g->numel(); ++i) (*g)[i] += s.grad[i] * av[i];
    });
}

Var scale(const Var& a, float k) {
    return make_result(a.value() * k, {&a}, [k](Node& s) {
        if (auto* g = grad_of(s, 0)) axpy_inplace(*g, k, s.grad);
    });
}

Var add_suffix(const Var& a, const Var& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (bs.size() > as.size() || !std::equal(bs.rbegin(), bs.rend(), as.rbegin()))
        throw DimensionError("add_suffix: " + shape_str(bs) + " is not a suffix of " + shape_str(as));
    const int64_t inner = b.value().numel();
    Tensor out = a.value();
    const float* bv = b.value().data();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += bv[i % inner];
    return make_result(std::move(out), {&a, &b}, [inner](Node& s) {
        if (auto* g = grad_of(s, 0)) axpy_inplace(*g, 1.0f, s.grad);
        if (auto* g = grad_of(s, 1))
            for (int64_t i = 0; i < s.grad.numel(); ++i) (*g)[i % inner] += s.grad[i];
    });
}

Var add_nc(const Var& a, const Var& b) {
    const auto& as = a.shape();
    if (as.size() < 2 || b.shape() != Shape{as[0], as[1]})
        throw DimensionError("add_nc: cannot broadcast " + shape_str(b.shape()) + " onto " + shape_str(as));
    const int64_t nc = as[0] * as[1];
    const int64_t inner = a.value().numel() / std::max<int64_t>(nc, 1);
    Tensor out = a.value();
    for (int64_t i = 0; i < nc; ++i)
        for (int64_t j = 0; j < inner; ++j) out[i * inner + j] += b.value()[i];
    return make_result(std::move(out), {&a, &b}, [nc, inner](Node& s) {
        if (auto* g = grad_of(s, 0)) axpy_inplace(*g, 1.0f, s.grad);
        if (auto* g = grad_of(s, 1))
            for (int64_t i = 0; i < nc; ++i) {
                float acc = 0.0f;
                for (int64_t j = 0; j < inner; ++j) acc += s.grad[i * inner + j];
                (*g)[i] += acc;
            }
    });
}

Var silu(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.storage()) v = v / (1.0f + std::exp(-v));
    return make_result(std::move(out), {&a}, [](Node& s) {
        const Tensor& x = input_value(s, 0);
        if (auto* g = grad_of(s, 0))
            for (int64_t i = 0; i < x.numel(); ++i) {
                const float sg = 1.0f / (1.0f + std::exp(-x[i]));
                (*g)[i] += s.grad[i] * sg * (1.0f + x[i] * (1.0f - sg));
            }
    });
}

Var reshape(const Var& a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return make_result(std::move(out), {&a}, [](Node& s) {
        if (auto* g = grad_of(s, 0))
            for (int64_t i = 0; i < g->numel(); ++i) (*g)[i] += s.grad[i];
    });
}

Tensor permute_tensor(const Tensor& t, const std::vector<int>& perm) {
    const auto& in_shape = t.shape();
    const size_t r = in_shape.size();
    if (perm.size() != r) throw DimensionError("permute: rank mismatch");
    Shape out_shape(r);
    for (size_t i = 0; i < r; ++i) out_shape[i] = in_shape[static_cast<size_t>(perm[i])];
    std::vector<int64_t> in_strides(r, 1);
    for (size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
    std::vector<int64_t> strides(r);
    for (size_t i = 0; i < r; ++i) strides[i] = in_strides[static_cast<size_t>(perm[i])];
    Tensor out(out_shape);
    std::vector<int64_t> idx(r, 0);
    const float* src = t.data();
    float* dst = out.data();
    const int64_t n = out.numel();
    const int64_t last = r ? out_shape[r - 1] : 1, last_stride = r ? strides[r - 1] : 1;
    int64_t offset = 0;
    for (int64_t i = 0; i < n; i += last) {
        for (int64_t j = 0; j < last; ++j) dst[i + j] = src[offset + j * last_stride];
        // advance multi-index over all but the last axis
        for (size_t ax = r - 1; ax-- > 0;) {
            if (++idx[ax] < out_shape[ax]) {
                offset += strides[ax];
                break;
            }
            offset -= strides[ax] * (out_shape[ax] - 1);
            idx[ax] = 0;
        }
    }
    return out;
}

Var permute(const Var& a, const std::vector<int>& perm) {
    std::vector<int> inverse(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inverse[static_cast<size_t>(perm[i])] = static_cast<int>(i);
    return make_result(permute_tensor(a.value(), perm), {&a}, [inverse](Node& s) {
        if (auto* g = grad_of(s, 0)) axpy_inplace(*g, 1.0f, permute_tensor(s.grad, inverse));
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const auto& as = a.shape();
    const auto& bs = b.shape();
    if (as.size() < 2 || as.size() != bs.size() || as[0] != bs[0] ||
        !std::equal(as.begin() + 2, as.end(), bs.begin() + 2))
        throw DimensionError("concat_channels: " + shape_str(as) + " vs " + shape_str(bs));
    const int64_t n = as[0];
    const int64_t sa = a.value().numel() / n, sb = b.value().numel() / n;
    Shape os = as;
    os[1] += bs[1];
    Tensor out(os);
    for (int64_t i = 0; i < n; ++i) {
        std::copy_n(a.value().data() + i * sa, sa, out.data() + i * (sa + sb));
        std::copy_n(b.value().data() + i * sb, sb, out.data() + i * (sa + sb) + sa);
    }
    return make_result(std::move(out), {&a, &b}, [n, sa, sb](Node& s) {
        if (auto* g = grad_of(s, 0))
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < sa; ++j) (*g)[i * sa + j] += s.grad[i * (sa + sb) + j];
        if (auto* g = grad_of(s, 1))
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < sb; ++j) (*g)[i * sb + j] += s.grad[i * (sa + sb) + sa + j];
    });
}

Var repeat_rows(const Var& a, int64_t repeats) {
    Shape os = a.shape();
    const int64_t rows = os.at(0);
    const int64_t inner = a.value().numel() / std::max<int64_t>(rows, 1);
    os[0] *= repeats;
    Tensor out(os);
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t r = 0; r < repeats; ++r)
            std::copy_n(a.value().data() + i * inner, inner, out.data() + (i * repeats + r) * inner);
    return make_result(std::move(out), {&a}, [rows, repeats, inner](Node& s) {
        if (auto* g = grad_of(s, 0))
            for (int64_t i = 0; i < rows; ++i)
                for (int64_t r = 0; r < repeats; ++r)
                    for (int64_t j = 0; j < inner; ++j) (*g)[i * inner + j] += s.grad[(i * repeats + r) * inner + j];
    });
}

Var stack(const std::vector<Var>& items) {
    if (items.empty()) throw DimensionError("stack: no inputs");
    const Shape& s0 = items.front().shape();
    const int64_t inner = items.front().value().numel();
    Shape os{static_cast<int64_t>(items.size())};
    os.insert(os.end(), s0.begin(), s0.end());
    Tensor out(os);
    std::vector<const Var*> inputs;
    for (size_t i = 0; i < items.size(); ++i) {
        require_shape(items[i], s0, "stack");
        std::copy_n(items[i].value().data(), inner, out.data() + static_cast<int64_t>(i) * inner);
        inputs.push_back(&items[i]);
    }
    return make_result(std::move(out), inputs, [inner](Node& s) {
        for (size_t i = 0; i < s.inputs.size(); ++i)
            if (auto* g = grad_of(s, i))
                for (int64_t j = 0; j < inner; ++j) (*g)[j] += s.grad[static_cast<int64_t>(i) * inner + j];
    });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, int64_t stride, int64_t pad) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (xs.size() != 4 || ws.size() != 4 || ws[1] != xs[1] || ws[2] != ws[3])
        throw DimensionError("conv2d: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
    kernels::ConvDims d{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], stride, pad};
    if (bias.defined()) require_shape(bias, Shape{ws[0]}, "conv2d bias");
    Tensor out(Shape{d.n, d.c_out, d.h_out(), d.w_out()});
    kernels::conv2d_forward(d, x.value().span(), w.value().span(),
                            bias.defined() ? bias.value().span() : std::span<const float>{}, out.span());
    return make_result(std::move(out), {&x, &w, &bias}, [d](Node& s) {
        Tensor* gx = grad_of(s, 0);
        Tensor* gw = grad_of(s, 1);
        Tensor* gb = s.inputs[2] ? grad_of(s, 2) : nullptr;
        kernels::conv2d_backward(d, input_value(s, 0).span(), input_value(s, 1).span(), s.grad.span(),
                                 gx ? gx->span() : std::span<float>{}, gw ? gw->span() : std::span<float>{},
                                 gb ? gb->span() : std::span<float>{});
    });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
    const auto& xs = x.shape();
    const auto& ws = w.shape();
    if (ws.size() != 2 || xs.empty() || xs.back() != ws[1])
        throw DimensionError("linear: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
    const int64_t k = ws[1], nout = ws[0], m = x.value().numel() / k;
    Shape os = xs;
    os.back() = nout;
    Tensor out(os);
    kernels::gemm(false, true, m, nout, k, 1.0f, x.value().span(), w.value().span(), 0.0f, out.span());
    if (bias.defined()) {
        require_shape(bias, Shape{nout}, "linear bias");
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < nout; ++j) out[i * nout + j] += bias.value()[j];
    }
    return make_result(std::move(out), {&x, &w, &bias}, [m, k, nout](Node& s) {
        if (auto* g = grad_of(s, 0))
            kernels::gemm(false, false, m, k, nout, 1.0f, s.grad.span(), input_value(s, 1).span(), 1.0f, g->span());
        if (auto* g = grad_of(s, 1))
            kernels::gemm(true, false, nout, k, m, 1.0f, s.grad.span(), input_value(s, 0).span(), 1.0f, g->span());
        if (s.inputs[2])
            if (auto* g = grad_of(s, 2))
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < nout; ++j) (*g)[j] += s.grad[i * nout + j];
    });
}

Var group_norm(const Var& x, const Var& gamma, const Var& beta, int64_t groups, float eps) {
    const auto& xs = x.shape();
    if (xs.size() < 2 || xs[1] % groups != 0)
        throw DimensionError("group_norm: " + shape_str(xs) + " not divisible into " + std::to_string(groups) + " groups");
    require_shape(gamma, Shape{xs[1]}, "group_norm gamma");
    require_shape(beta, Shape{xs[1]}, "group_norm beta");
    kernels::NormDims d{xs[0], xs[1], x.value().numel() / (xs[0] * xs[1]), groups};
    Tensor out(xs);
    auto stats = std::make_shared<std::pair<Tensor, Tensor>>(Tensor(Shape{d.n, groups}), Tensor(Shape{d.n, groups}));
    kernels::group_norm_forward(d, eps, x.value().span(), gamma.value().span(), beta.value().span(), out.span(),
                                stats->first.span(), stats->second.span());
    return make_result(std::move(out), {&x, &gamma, &beta}, [d, stats](Node& s) {
        Tensor* gx = grad_of(s, 0);
        Tensor* gg = grad_of(s, 1);
        Tensor* gb = grad_of(s, 2);
        Tensor dx_tmp, dg_tmp, db_tmp;
        if (!gx) dx_tmp = Tensor::zeros(s.value.shape());
        if (!gg) dg_tmp = Tensor::zeros(Shape{d.c});
        if (!gb) db_tmp = Tensor::zeros(Shape{d.c});
        kernels::group_norm_backward(d, input_value(s, 0).span(), input_value(s, 1).span(), stats->first.span(),
                                     stats->second.span(), s.grad.span(), gx ? gx->span() : dx_tmp.span(),
                                     gg ? gg->span() : dg_tmp.span(), gb ? gb->span() : db_tmp.span());
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps) {
    const auto& xs = x.shape();
    const int64_t c = xs.back();
    require_shape(gamma, Shape{c}, "layer_norm gamma");
    require_shape(beta, Shape{c}, "layer_norm beta");
    // Rows are groups of size c with one group: reuse the group-norm kernel.
    kernels::NormDims d{x.value().numel() / c, 1, c, 1};
    Tensor out(xs);
    auto stats = std::make_shared<std::pair<Tensor, Tensor>>(Tensor(Shape{d.n}), Tensor(Shape{d.n}));
    const Tensor ones(Shape{1}, 1.0f), zeros(Shape{1}, 0.0f);
    kernels::group_norm_forward(d, eps, x.value().span(), ones.span(), zeros.span(), out.span(), stats->first.span(),
                                stats->second.span());
    Tensor normalized = out;
    for (int64_t i = 0; i < d.n; ++i)
        for (int64_t j = 0; j < c; ++j) out[i * c + j] = out[i * c + j] * gamma.value()[j] + beta.value()[j];
    auto xhat = std::make_shared<Tensor>(std::move(normalized));
    return make_result(std::move(out), {&x, &gamma, &beta}, [d, c, stats, xhat](Node& s) {
        const Tensor& gam = input_value(s, 1);
        if (auto* g = grad_of(s, 1))
            for (int64_t i = 0; i < d.n; ++i)
                for (int64_t j = 0; j < c; ++j) (*g)[j] += s.grad[i * c + j] * (*xhat)[i * c + j];
        if (auto* g = grad_of(s, 2))
            for (int64_t i = 0; i < d.n; ++i)
                for (int64_t j = 0; j < c; ++j) (*g)[j] += s.grad[i * c + j];
        if (auto* g = grad_of(s, 0)) {
            for (int64_t i = 0; i < d.n; ++i) {
                double sum_d = 0.0, sum_dx = 0.0;
                for (int64_t j = 0; j < c; ++j) {
                    const double dxh = static_cast<double>(s.grad[i * c + j]) * gam[j];
                    sum_d += dxh;
                    sum_dx += dxh * (*xhat)[i * c + j];
                }
                const double r = stats->second[i];
                for (int64_t j = 0; j < c; ++j) {
                    const double dxh = static_cast<double>(s.grad[i * c + j]) * gam[j];
                    (*g)[i * c + j] += static_cast<float>(r * (dxh - (sum_d + (*xhat)[i * c + j] * sum_dx) / c));
                }
            }
        }
    });
}

Var attention(const Var& q, const Var& k, const Var& v, int64_t heads) {
    const auto& qs = q.shape();
    const auto& ks = k.shape();
    const auto& vs = v.shape();
    if (qs.size() != 3 || ks.size() != 3 || vs.size() != 3 || qs[0] != ks[0] || ks[0] != vs[0] ||
        ks[1] != vs[1] || qs[2] != ks[2] || qs[2] % heads || vs[2] % heads)
        throw DimensionError("attention: incompatible q " + shape_str(qs) + ", k " + shape_str(ks) + ", v " +
                             shape_str(vs));
    const int64_t b = qs[0], lq = qs[1], lk = ks[1], dh = qs[2] / heads, dvh = vs[2] / heads;
    auto split = [heads](const Var& t) {
        const auto& s = t.shape();
        Var r = reshape(t, Shape{s[0], s[1], heads, s[2] / heads});
        r = permute(r, {0, 2, 1, 3});
        return reshape(r, Shape{s[0] * heads, s[1], s[2] / heads});
    };
    Var qh = heads > 1 ? split(q) : q;
    Var kh = heads > 1 ? split(k) : k;
    Var vh = heads > 1 ? split(v) : v;
    kernels::AttnDims d{b * heads, lq, lk, dh, dvh};
    const float sc = 1.0f / std::sqrt(static_cast<float>(dh));
    auto probs = std::make_shared<Tensor>(Shape{d.batch, lq, lk});
    Tensor out(Shape{d.batch, lq, dvh});
    kernels::attention_forward(d, sc, qh.value().span(), kh.value().span(), vh.value().span(), probs->span(),
                               out.span());
    Var o = make_result(std::move(out), {&qh, &kh, &vh}, [d, sc, probs](Node& s) {
        Tensor* gq = grad_of(s, 0);
        Tensor* gk = grad_of(s, 1);
        Tensor* gv = grad_of(s, 2);
        Tensor tq, tk, tv;
        if (!gq) tq = Tensor::zeros(input_value(s, 0).shape());
        if (!gk) tk = Tensor::zeros(input_value(s, 1).shape());
        if (!gv) tv = Tensor::zeros(input_value(s, 2).shape());
        kernels::attention_backward(d, sc, input_value(s, 0).span(), input_value(s, 1).span(),
                                    input_value(s, 2).span(), probs->span(), s.grad.span(),
                                    gq ? gq->span() : tq.span(), gk ? gk->span() : tk.span(),
                                    gv ? gv->span() : tv.span());
    });
    if (heads == 1) return o;
    o = reshape(o, Shape{b, heads, lq, dvh});
    o = permute(o, {0, 2, 1, 3});
    return reshape(o, Shape{b, lq, heads * dvh});
}

Var upsample_nearest2x(const Var& x) {
    const auto& xs = x.shape();
    if (xs.size() != 4) throw DimensionError("upsample: expected [N, C, H, W]");
    const int64_t planes = xs[0] * xs[1], h = xs[2], w = xs[3];
    Tensor out(Shape{xs[0], xs[1], 2 * h, 2 * w});
    for (int64_t p = 0; p < planes; ++p)
        for (int64_t y = 0; y < 2 * h; ++y)
            for (int64_t xx = 0; xx < 2 * w; ++xx)
                out[(p * 2 * h + y) * 2 * w + xx] = x.value()[(p * h + y / 2) * w + xx / 2];
    return make_result(std::move(out), {&x}, [planes, h, w](Node& s) {
        if (auto* g = grad_of(s, 0))
            for (int64_t p = 0; p < planes; ++p)
                for (int64_t y = 0; y < 2 * h; ++y)
                    for (int64_t xx = 0; xx < 2 * w; ++xx)
                        (*g)[(p * h + y / 2) * w + xx / 2] += s.grad[(p * 2 * h + y) * 2 * w + xx];
    });
}

Var embedding(const Var& table, const std::vector<int64_t>& ids) {
    const auto& ts = table.shape();
    if (ts.size() != 2) throw DimensionError("embedding: table must be [V, D]");
    const int64_t dim = ts[1];
    Tensor out(Shape{static_cast<int64_t>(ids.size()), dim});
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= ts[0]) throw ParameterError("embedding: row id out of range");
        std::copy_n(table.value().data() + ids[i] * dim, dim, out.data() + static_cast<int64_t>(i) * dim);
    }
    return make_result(std::move(out), {&table}, [ids, dim](Node& s) {
        if (auto* g = grad_of(s, 0))
            for (size_t i = 0; i < ids.size(); ++i)
                for (int64_t j = 0; j < dim; ++j) (*g)[ids[i] * dim + j] += s.grad[static_cast<int64_t>(i) * dim + j];
    });
}

Var mse(const Var& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw DimensionError("mse: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    double acc = 0.0;
    const int64_t n = target.numel();
    for (int64_t i = 0; i < n; ++i) {
        const double diff = static_cast<double>(pred.value()[i]) - target[i];
        acc += diff * diff;
    }
    auto tgt = std::make_shared<Tensor>(target);
    return make_result(Tensor::scalar(static_cast<float>(acc / static_cast<double>(n))), {&pred},
                       [tgt, n](Node& s) {
                           if (auto* g = grad_of(s, 0)) {
                               const float k = 2.0f * s.grad[0] / static_cast<float>(n);
                               const Tensor& p = input_value(s, 0);
                               for (int64_t i = 0; i < n; ++i) (*g)[i] += k * (p[i] - (*tgt)[i]);
                           }
                       });
}

}  // namespace mcam::ag
