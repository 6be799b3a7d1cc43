#pragma once

#include <map>
#include <string>
#include <vector>

#include "mcam/autograd.hpp"
#include "mcam/rng.hpp"

namespace mcam::nn {

using ag::Var;

// Ordered name -> parameter map. Names are dotted paths ("enc.0.res.conv1.weight").
class ParamSet {
public:
    void add(const std::string& name, const Var& v);
    const std::map<std::string, Var>& items() const { return params_; }
    std::map<std::string, Var>& items() { return params_; }
    const Var& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    int64_t count_elements() const;

private:
    std::map<std::string, Var> params_;
};

Var make_param(Tensor t);
// PyTorch-style default: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Var uniform_param(Rng& rng, Shape shape, int64_t fan_in);

struct Linear {
    Var weight, bias;

    Linear() = default;
    Linear(Rng& rng, int64_t in, int64_t out, bool with_bias = true, bool zero_init = false);
    Var operator()(const Var& x) const { return ag::linear(x, weight, bias); }
    // Uses a caller-supplied effective weight (LoRA overlay) with this layer's bias.
    Var with_weight(const Var& x, const Var& w) const { return ag::linear(x, w, bias); }
    void collect(const std::string& prefix, ParamSet& out) const;
};

struct Conv2d {
    Var weight, bias;
    int64_t stride = 1, pad = 1;

    Conv2d() = default;
    Conv2d(Rng& rng, int64_t in, int64_t out, int64_t k, int64_t stride = 1, bool zero_init = false);
    Var operator()(const Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }
    void collect(const std::string& prefix, ParamSet& out) const;
};

struct GroupNorm {
    Var gamma, beta;
    int64_t groups = 1;

    GroupNorm() = default;
    GroupNorm(int64_t channels, int64_t groups);
    Var operator()(const Var& x) const { return ag::group_norm(x, gamma, beta, groups); }
    void collect(const std::string& prefix, ParamSet& out) const;
};

struct LayerNorm {
    Var gamma, beta;

    LayerNorm() = default;
    explicit LayerNorm(int64_t channels);
    Var operator()(const Var& x) const { return ag::layer_norm(x, gamma, beta); }
    void collect(const std::string& prefix, ParamSet& out) const;
};

// [N, C, H, W] <-> [N, H*W, C]
Var to_tokens(const Var& x);
Var from_tokens(const Var& tokens, int64_t h, int64_t w);

// Sinusoidal features, one row per position: [positions.size(), dim].
Tensor sinusoidal_embedding(const std::vector<float>& positions, int64_t dim, float max_period = 10000.0f);

int64_t group_count(int64_t channels, int64_t preferred);

}  // namespace mcam::nn
