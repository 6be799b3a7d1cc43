#pragma once

// Minimal tape-free reverse-mode autodiff: every op returns a Var whose node
// remembers its inputs and a backward closure. backward() walks the graph in
// reverse topological order. Parameters are leaf Vars with requires_grad set.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mcam/tensor.hpp"

namespace mcam::ag {

struct Node {
    Tensor value;
    Tensor grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    Tensor& ensure_grad();
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false);
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    Tensor& mutable_value() { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& mutable_grad() { return node_->grad; }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    const Shape& shape() const { return node_->value.shape(); }
    bool defined() const { return static_cast<bool>(node_); }
    void zero_grad() { node_->grad = Tensor(); }

    const std::shared_ptr<Node>& node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

// Graph recording is on by default; NoGradGuard disables it for inference.
bool grad_enabled();
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// Seeds d(root)=1 (root must be a single element) and propagates.
void backward(const Var& root);

Var constant(Tensor t);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, float s);
// b's shape must equal a trailing suffix of a's shape; b is broadcast over the leading axes.
Var add_suffix(const Var& a, const Var& b);
// a [N, C, ...], b [N, C]: adds b[n, c] to every element of a[n, c, ...].
Var add_nc(const Var& a, const Var& b);
Var silu(const Var& a);
Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, const std::vector<int>& perm);
// Concatenate along axis 1 (channels) of [N, C, ...] tensors.
Var concat_channels(const Var& a, const Var& b);
// [n, ...] from n equally shaped inputs.
Var stack(const std::vector<Var>& items);
// [b, ...] -> [b * repeats, ...] with row n = bi * repeats + r.
Var repeat_rows(const Var& a, int64_t repeats);

// x [N, C, H, W], w [Cout, C, k, k], bias [Cout] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& bias, int64_t stride, int64_t pad);
// x [..., K], w [Nout, K], bias [Nout] or undefined -> [..., Nout].
Var linear(const Var& x, const Var& w, const Var& bias = Var());
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int64_t groups, float eps = 1e-5f);
// Normalizes over the last axis.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps = 1e-5f);
// q [B, Lq, H*d], k [B, Lk, H*d], v [B, Lk, H*dv].
Var attention(const Var& q, const Var& k, const Var& v, int64_t heads);
Var upsample_nearest2x(const Var& x);
// table [V, D] -> rows [ids.size(), D].
Var embedding(const Var& table, const std::vector<int64_t>& ids);
// Mean squared error, scalar output.
Var mse(const Var& pred, const Tensor& target);

// Plain-tensor permute used by ops and callers alike.
Tensor permute_tensor(const Tensor& t, const std::vector<int>& perm);

}  // namespace mcam::ag
