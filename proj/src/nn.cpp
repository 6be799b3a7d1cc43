#include "mcam/nn.hpp"

#include <cmath>

#include "mcam/errors.hpp"

namespace mcam::nn {

void ParamSet::add(const std::string& name, const Var& v) {
    if (!v.defined()) return;
    if (!params_.emplace(name, v).second) throw ParameterError("duplicate parameter name " + name);
}

const Var& ParamSet::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ParameterError("unknown parameter " + name);
    return it->second;
}

int64_t ParamSet::count_elements() const {
    int64_t n = 0;
    for (const auto& [_, v] : params_) n += v.value().numel();
    return n;
}

Var make_param(Tensor t) { return Var(std::move(t), true); }

Var uniform_param(Rng& rng, Shape shape, int64_t fan_in) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(std::max<int64_t>(fan_in, 1)));
    return make_param(rng.uniform_tensor(std::move(shape), -bound, bound));
}

Linear::Linear(Rng& rng, int64_t in, int64_t out, bool with_bias, bool zero_init) {
    weight = zero_init ? make_param(Tensor::zeros({out, in})) : uniform_param(rng, {out, in}, in);
    if (with_bias) bias = zero_init ? make_param(Tensor::zeros({out})) : uniform_param(rng, {out}, in);
}

void Linear::collect(const std::string& prefix, ParamSet& out) const {
    out.add(prefix + ".weight", weight);
    out.add(prefix + ".bias", bias);
}

Conv2d::Conv2d(Rng& rng, int64_t in, int64_t out, int64_t k, int64_t stride_, bool zero_init)
    : stride(stride_), pad(k / 2) {
    const int64_t fan_in = in * k * k;
    weight = zero_init ? make_param(Tensor::zeros({out, in, k, k})) : uniform_param(rng, {out, in, k, k}, fan_in);
    bias = zero_init ? make_param(Tensor::zeros({out})) : uniform_param(rng, {out}, fan_in);
}

void Conv2d::collect(const std::string& prefix, ParamSet& out) const {
    out.add(prefix + ".weight", weight);
    out.add(prefix + ".bias", bias);
}

GroupNorm::GroupNorm(int64_t channels, int64_t groups_)
    : gamma(make_param(Tensor({channels}, 1.0f))), beta(make_param(Tensor::zeros({channels}))), groups(groups_) {}

void GroupNorm::collect(const std::string& prefix, ParamSet& out) const {
    out.add(prefix + ".gamma", gamma);
    out.add(prefix + ".beta", beta);
}

LayerNorm::LayerNorm(int64_t channels)
    : gamma(make_param(Tensor({channels}, 1.0f))), beta(make_param(Tensor::zeros({channels}))) {}

void LayerNorm::collect(const std::string& prefix, ParamSet& out) const {
    out.add(prefix + ".gamma", gamma);
    out.add(prefix + ".beta", beta);
}

Var to_tokens(const Var& x) {
    const auto& s = x.shape();
    return ag::permute(ag::reshape(x, {s[0], s[1], s[2] * s[3]}), {0, 2, 1});
}

Var from_tokens(const Var& tokens, int64_t h, int64_t w) {
    const auto& s = tokens.shape();
    return ag::reshape(ag::permute(tokens, {0, 2, 1}), {s[0], s[2], h, w});
}

Tensor sinusoidal_embedding(const std::vector<float>& positions, int64_t dim, float max_period) {
    Tensor out({static_cast<int64_t>(positions.size()), dim});
    const int64_t half = dim / 2;
    for (size_t i = 0; i < positions.size(); ++i)
        for (int64_t j = 0; j < half; ++j) {
            const double freq = std::exp(-std::log(static_cast<double>(max_period)) * j / std::max<int64_t>(half, 1));
            const double a = positions[i] * freq;
            out[static_cast<int64_t>(i) * dim + j] = static_cast<float>(std::sin(a));
            out[static_cast<int64_t>(i) * dim + half + j] = static_cast<float>(std::cos(a));
        }
    return out;
}

int64_t group_count(int64_t channels, int64_t preferred) {
    int64_t g = std::min(preferred, channels);
    while (g > 1 && channels % g) --g;
    return std::max<int64_t>(g, 1);
}

}  // namespace mcam::nn
