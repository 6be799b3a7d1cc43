#include "mcam/video_unet.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "mcam/errors.hpp"

namespace mcam {

// ---------------------------------------------------------------- text

TextEmbedder::TextEmbedder(std::vector<std::string> vocabulary, int64_t dim, int64_t context_len, Rng& rng)
    : vocabulary_(std::move(vocabulary)), dim_(dim), context_len_(context_len) {
    if (dim < 1 || context_len < 1) throw ParameterError("text embedder needs dim >= 1 and context_len >= 1");
    int64_t row = 3;
    for (const auto& w : vocabulary_)
        if (rows_.emplace(w, row).second) ++row;
    table_ = nn::make_param(rng.normal_tensor({row, dim}, 1.0f));
    // PAD contributes a fixed zero-ish row; keep it trainable like the rest.
}

std::vector<std::string> TextEmbedder::tokenize(std::string_view prompt) const {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : prompt) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<int64_t> TextEmbedder::token_ids(std::string_view prompt) const {
    const auto words = tokenize(prompt);
    if (words.empty()) throw InputError("empty prompt");
    std::vector<int64_t> ids;
    for (const auto& w : words) {
        if (static_cast<int64_t>(ids.size()) == context_len_) break;
        auto it = rows_.find(w);
        ids.push_back(it == rows_.end() ? kUnk : it->second);
    }
    ids.resize(static_cast<size_t>(context_len_), kPad);
    return ids;
}

Var TextEmbedder::embed_var(std::string_view prompt) const { return ag::embedding(table_, token_ids(prompt)); }

Var TextEmbedder::null_var() const {
    std::vector<int64_t> ids(static_cast<size_t>(context_len_), kPad);
    ids[0] = kNull;
    return ag::embedding(table_, ids);
}

TextEmbedding TextEmbedder::embed(std::string_view prompt) const {
    ag::NoGradGuard guard;
    return {embed_var(prompt).value(), "lookup"};
}

TextEmbedding TextEmbedder::null_embedding() const {
    ag::NoGradGuard guard;
    return {null_var().value(), "lookup-null"};
}

void TextEmbedder::collect(const std::string& prefix, nn::ParamSet& out) const { out.add(prefix + ".table", table_); }

TextEmbedding embed_text(const TextEmbedder& embedder, std::string_view prompt) { return embedder.embed(prompt); }

// ---------------------------------------------------------------- overlays

Var overlay_delta(const std::vector<LoraTerm>& terms) {
    Var total;
    for (const auto& term : terms) {
        Var d = term.dense.defined() ? term.dense : ag::scale(ag::linear(term.a, term.b), term.scale);
        total = total.defined() ? ag::add(total, d) : d;
    }
    return total;
}

// ---------------------------------------------------------------- temporal

TemporalLayer::TemporalLayer(Rng& rng, std::string id_, int64_t channels_, int64_t heads_)
    : id(std::move(id_)),
      channels(channels_),
      heads(heads_),
      norm(channels_),
      q(rng, channels_, channels_, false),
      k(rng, channels_, channels_, false),
      v(rng, channels_, channels_, false),
      out(rng, channels_, channels_, true, /*zero_init=*/true) {
    if (channels_ % heads_) throw ParameterError("temporal layer " + id + ": channels not divisible by heads");
}

std::vector<std::string> TemporalLayer::projection_ids() const { return {id + ".q", id + ".k", id + ".v", id + ".out"}; }

const nn::Linear& TemporalLayer::projection(const std::string& projection_id) const {
    if (projection_id == id + ".q") return q;
    if (projection_id == id + ".k") return k;
    if (projection_id == id + ".v") return v;
    if (projection_id == id + ".out") return out;
    throw ParameterError("unknown temporal projection " + projection_id);
}

Var TemporalLayer::operator()(const Var& x, int64_t frames, const MotionOverlay* overlay) const {
    const auto& s = x.shape();
    if (s.size() != 4 || s[1] != channels)
        throw DimensionError("temporal layer " + id + ": expected " + std::to_string(channels) + " channels, got " +
                             shape_str(s));
    if (frames < 1 || s[0] % frames) throw DimensionError("temporal layer " + id + ": frame count does not divide batch");
    const int64_t b = s[0] / frames, c = s[1], h = s[2], w = s[3];

    auto project = [&](const nn::Linear& lin, const std::string& pid, const Var& in) {
        if (overlay) {
            auto it = overlay->terms.find(pid);
            if (it != overlay->terms.end() && !it->second.empty())
                return lin.with_weight(in, ag::add(lin.weight, overlay_delta(it->second)));
        }
        return lin(in);
    };

    // [b*f, C, H, W] -> [b, H*W, f, C] -> [b*H*W, f, C]
    Var seq = ag::reshape(x, {b, frames, c, h * w});
    seq = ag::permute(seq, {0, 3, 1, 2});
    seq = ag::reshape(seq, {b * h * w, frames, c});

    std::vector<float> pos(static_cast<size_t>(frames));
    for (int64_t i = 0; i < frames; ++i) pos[static_cast<size_t>(i)] = static_cast<float>(i);
    Var hidden = ag::add_suffix(norm(seq), ag::constant(nn::sinusoidal_embedding(pos, c)));

    Var attn = ag::attention(project(q, id + ".q", hidden), project(k, id + ".k", hidden),
                             project(v, id + ".v", hidden), heads);
    Var o = project(out, id + ".out", attn);

    o = ag::reshape(o, {b, h * w, frames, c});
    o = ag::permute(o, {0, 2, 3, 1});
    o = ag::reshape(o, {b * frames, c, h, w});
    return ag::add(x, o);
}

void TemporalLayer::collect(const std::string& prefix, nn::ParamSet& out_set) const {
    norm.collect(prefix + ".norm", out_set);
    q.collect(prefix + ".q", out_set);
    k.collect(prefix + ".k", out_set);
    v.collect(prefix + ".v", out_set);
    out.collect(prefix + ".out", out_set);
}

Var temporal_attention(const TemporalLayer& layer, const Var& x, int64_t frames, const MotionOverlay* overlay) {
    return layer(x, frames, overlay);
}

// ---------------------------------------------------------------- spatial blocks

ResBlock::ResBlock(Rng& rng, int64_t in, int64_t out, int64_t temb_dim, int64_t groups)
    : norm1(in, nn::group_count(in, groups)),
      norm2(out, nn::group_count(out, groups)),
      conv1(rng, in, out, 3),
      conv2(rng, out, out, 3),
      time_proj(rng, temb_dim, out) {
    if (in != out) shortcut = nn::Conv2d(rng, in, out, 1);
}

Var ResBlock::operator()(const Var& x, const Var& temb_act) const {
    Var h = conv1(ag::silu(norm1(x)));
    h = ag::add_nc(h, time_proj(temb_act));
    h = conv2(ag::silu(norm2(h)));
    return ag::add(shortcut ? (*shortcut)(x) : x, h);
}

void ResBlock::collect(const std::string& prefix, nn::ParamSet& out) const {
    norm1.collect(prefix + ".norm1", out);
    norm2.collect(prefix + ".norm2", out);
    conv1.collect(prefix + ".conv1", out);
    conv2.collect(prefix + ".conv2", out);
    time_proj.collect(prefix + ".time_proj", out);
    if (shortcut) shortcut->collect(prefix + ".shortcut", out);
}

SelfAttention::SelfAttention(Rng& rng, int64_t channels, int64_t heads_, int64_t groups)
    : norm(channels, nn::group_count(channels, groups)),
      q(rng, channels, channels, false),
      k(rng, channels, channels, false),
      v(rng, channels, channels, false),
      out(rng, channels, channels),
      heads(heads_) {}

Var SelfAttention::operator()(const Var& x) const {
    const auto& s = x.shape();
    Var tokens = nn::to_tokens(norm(x));
    Var o = out(ag::attention(q(tokens), k(tokens), v(tokens), heads));
    return ag::add(x, nn::from_tokens(o, s[2], s[3]));
}

void SelfAttention::collect(const std::string& prefix, nn::ParamSet& out_set) const {
    norm.collect(prefix + ".norm", out_set);
    q.collect(prefix + ".q", out_set);
    k.collect(prefix + ".k", out_set);
    v.collect(prefix + ".v", out_set);
    out.collect(prefix + ".out", out_set);
}

CrossAttention::CrossAttention(Rng& rng, int64_t channels, int64_t context_dim, int64_t heads_, int64_t groups)
    : norm(channels, nn::group_count(channels, groups)),
      q(rng, channels, channels, false),
      k(rng, context_dim, channels, false),
      v(rng, context_dim, channels, false),
      out(rng, channels, channels),
      heads(heads_) {}

Var CrossAttention::operator()(const Var& x, const Var& context) const {
    const auto& s = x.shape();
    if (context.shape().size() != 3 || context.shape()[0] != s[0])
        throw DimensionError("cross attention: context " + shape_str(context.shape()) + " vs features " + shape_str(s));
    Var tokens = nn::to_tokens(norm(x));
    Var o = out(ag::attention(q(tokens), k(context), v(context), heads));
    return ag::add(x, nn::from_tokens(o, s[2], s[3]));
}

void CrossAttention::collect(const std::string& prefix, nn::ParamSet& out_set) const {
    norm.collect(prefix + ".norm", out_set);
    q.collect(prefix + ".q", out_set);
    k.collect(prefix + ".k", out_set);
    v.collect(prefix + ".v", out_set);
    out.collect(prefix + ".out", out_set);
}

Var SpatialBlock::operator()(const Var& x, const Var& temb_act, const Var& context, int64_t frames,
                             const MotionOverlay* overlay) const {
    Var h = res(x, temb_act);
    if (self_attn) h = (*self_attn)(h);
    if (cross_attn && context.defined()) h = (*cross_attn)(h, context);
    return temporal(h, frames, overlay);
}

void SpatialBlock::collect(const std::string& prefix, nn::ParamSet& out) const {
    res.collect(prefix + ".res", out);
    if (self_attn) self_attn->collect(prefix + ".self_attn", out);
    if (cross_attn) cross_attn->collect(prefix + ".cross_attn", out);
    temporal.collect(prefix + ".temporal", out);
}

// ---------------------------------------------------------------- config

void UNetConfig::validate() const {
    if (in_channels < 1 || base_width < 1 || channel_mults.empty())
        throw ParameterError("unet config: channels, width and levels must be positive");
    const int64_t div = int64_t{1} << (levels() - 1);
    if (resolution % div) throw ParameterError("unet config: resolution must be divisible by " + std::to_string(div));
    for (int64_t l = 0; l < levels(); ++l)
        if (channels(l) % attn_heads || channels(l) % temporal_heads)
            throw ParameterError("unet config: channel width not divisible by head count");
}

void to_json(nlohmann::json& j, const UNetConfig& c) {
    j = nlohmann::json{{"in_channels", c.in_channels},       {"base_width", c.base_width},
                       {"channel_mults", c.channel_mults},   {"groups", c.groups},
                       {"attn_heads", c.attn_heads},         {"temporal_heads", c.temporal_heads},
                       {"text_dim", c.text_dim},             {"context_len", c.context_len},
                       {"max_timestep", c.max_timestep},     {"resolution", c.resolution}};
}

void from_json(const nlohmann::json& j, UNetConfig& c) {
    j.at("in_channels").get_to(c.in_channels);
    j.at("base_width").get_to(c.base_width);
    j.at("channel_mults").get_to(c.channel_mults);
    j.at("groups").get_to(c.groups);
    j.at("attn_heads").get_to(c.attn_heads);
    j.at("temporal_heads").get_to(c.temporal_heads);
    j.at("text_dim").get_to(c.text_dim);
    j.at("context_len").get_to(c.context_len);
    j.at("max_timestep").get_to(c.max_timestep);
    j.at("resolution").get_to(c.resolution);
}

// ---------------------------------------------------------------- time embedding

TimeEmbedding::TimeEmbedding(Rng& rng, int64_t base_dim_, int64_t temb_dim)
    : lin1(rng, base_dim_, temb_dim), lin2(rng, temb_dim, temb_dim), base_dim(base_dim_) {}

Var TimeEmbedding::operator()(std::span<const int64_t> timesteps) const {
    std::vector<float> pos(timesteps.begin(), timesteps.end());
    Var e = ag::constant(nn::sinusoidal_embedding(pos, base_dim));
    return ag::silu(lin2(ag::silu(lin1(e))));
}

void TimeEmbedding::collect(const std::string& prefix, nn::ParamSet& out) const {
    lin1.collect(prefix + ".lin1", out);
    lin2.collect(prefix + ".lin2", out);
}

// ---------------------------------------------------------------- encoder

EncoderStack::EncoderStack(Rng& rng, const UNetConfig& cfg, const std::string& id_prefix, bool with_cross_attn)
    : conv_in(rng, cfg.in_channels, cfg.base_width, 3) {
    int64_t prev = cfg.base_width;
    for (int64_t l = 0; l < cfg.levels(); ++l) {
        const int64_t ch = cfg.channels(l);
        SpatialBlock blk;
        blk.res = ResBlock(rng, prev, ch, cfg.temb_dim(), cfg.groups);
        if (l == cfg.levels() - 1) blk.self_attn = SelfAttention(rng, ch, cfg.attn_heads, cfg.groups);
        if (with_cross_attn) blk.cross_attn = CrossAttention(rng, ch, cfg.text_dim, cfg.attn_heads, cfg.groups);
        blk.temporal = TemporalLayer(rng, id_prefix + "." + std::to_string(l) + ".temporal", ch, cfg.temporal_heads);
        blocks.push_back(std::move(blk));
        if (l + 1 < cfg.levels()) downsample.emplace_back(rng, ch, ch, 3, 2);
        prev = ch;
    }
}

std::vector<Var> EncoderStack::operator()(const Var& x, const Var& temb_act, const Var& context, int64_t frames,
                                          const MotionOverlay* overlay) const {
    std::vector<Var> skips;
    Var h = conv_in(x);
    for (size_t l = 0; l < blocks.size(); ++l) {
        h = blocks[l](h, temb_act, context, frames, overlay);
        skips.push_back(h);
        if (l < downsample.size()) h = downsample[l](h);
    }
    return skips;
}

void EncoderStack::collect(const std::string& prefix, nn::ParamSet& out) const {
    conv_in.collect(prefix + ".conv_in", out);
    for (size_t l = 0; l < blocks.size(); ++l) blocks[l].collect(prefix + "." + std::to_string(l), out);
    for (size_t l = 0; l < downsample.size(); ++l) downsample[l].collect(prefix + ".down" + std::to_string(l), out);
}

// ---------------------------------------------------------------- denoiser

DenoiserNet::DenoiserNet(const UNetConfig& config, std::vector<std::string> vocabulary, uint64_t seed)
    : config_(config) {
    config_.validate();
    Rng rng(seed);
    text_ = TextEmbedder(std::move(vocabulary), config_.text_dim, config_.context_len, rng);
    time_ = TimeEmbedding(rng, config_.base_width, config_.temb_dim());
    encoder_ = EncoderStack(rng, config_, "enc", true);
    const int64_t levels = config_.levels();
    const int64_t bottom = config_.channels(levels - 1);
    mid_.res = ResBlock(rng, bottom, bottom, config_.temb_dim(), config_.groups);
    mid_.self_attn = SelfAttention(rng, bottom, config_.attn_heads, config_.groups);
    mid_.cross_attn = CrossAttention(rng, bottom, config_.text_dim, config_.attn_heads, config_.groups);
    mid_.temporal = TemporalLayer(rng, "mid.temporal", bottom, config_.temporal_heads);
    decoder_.resize(static_cast<size_t>(levels));
    upsample_.resize(static_cast<size_t>(levels));
    for (int64_t l = levels - 1; l >= 0; --l) {
        const int64_t ch = config_.channels(l);
        const int64_t below = (l == levels - 1) ? bottom : config_.channels(l + 1);
        SpatialBlock& blk = decoder_[static_cast<size_t>(l)];
        blk.res = ResBlock(rng, below + ch, ch, config_.temb_dim(), config_.groups);
        if (l == levels - 1) blk.self_attn = SelfAttention(rng, ch, config_.attn_heads, config_.groups);
        blk.cross_attn = CrossAttention(rng, ch, config_.text_dim, config_.attn_heads, config_.groups);
        blk.temporal = TemporalLayer(rng, "dec." + std::to_string(l) + ".temporal", ch, config_.temporal_heads);
        if (l > 0) upsample_[static_cast<size_t>(l)] = nn::Conv2d(rng, ch, ch, 3);
    }
    out_norm_ = nn::GroupNorm(config_.base_width, nn::group_count(config_.base_width, config_.groups));
    out_conv_ = nn::Conv2d(rng, config_.base_width, config_.in_channels, 3);
}

Var latent_to_frames(const Var& z) {
    const auto& s = z.shape();
    if (s.size() != 5) throw DimensionError("latent must be [b, c, f, h, w], got " + shape_str(s));
    return ag::reshape(ag::permute(z, {0, 2, 1, 3, 4}), {s[0] * s[2], s[1], s[3], s[4]});
}

Var frames_to_latent(const Var& x, int64_t batch, int64_t frames) {
    const auto& s = x.shape();
    return ag::permute(ag::reshape(x, {batch, frames, s[1], s[2], s[3]}), {0, 2, 1, 3, 4});
}

Var stack_text(const std::vector<Var>& rows) { return ag::stack(rows); }

Var DenoiserNet::forward(const Var& z, std::span<const int64_t> timesteps, const Var& text,
                         const ControlResiduals* control, const MotionOverlay* overlay) const {
    const auto& s = z.shape();
    if (s.size() != 5 || s[1] != config_.in_channels)
        throw DimensionError("denoiser input must be [b, " + std::to_string(config_.in_channels) + ", f, h, w], got " +
                             shape_str(s));
    const int64_t div = int64_t{1} << (config_.levels() - 1);
    if (s[3] % div || s[4] % div)
        throw DimensionError("denoiser spatial size must be divisible by " + std::to_string(div));
    const int64_t b = s[0], frames = s[2];
    if (static_cast<int64_t>(timesteps.size()) != b) throw DimensionError("one timestep per batch entry required");
    for (auto t : timesteps)
        if (t < 0 || t > config_.max_timestep)
            throw ParameterError("timestep " + std::to_string(t) + " outside embedding range [0, " +
                                 std::to_string(config_.max_timestep) + "]");
    if (text.shape() != Shape{b, config_.context_len, config_.text_dim})
        throw DimensionError("text embedding must be " + shape_str({b, config_.context_len, config_.text_dim}) +
                             ", got " + shape_str(text.shape()));

    Var x = latent_to_frames(z);
    Var temb = ag::repeat_rows(time_(timesteps), frames);
    Var context = ag::repeat_rows(text, frames);

    std::vector<Var> skips = encoder_(x, temb, context, frames, overlay);
    Var h = mid_(skips.back(), temb, context, frames, overlay);
    if (control && static_cast<int64_t>(control->levels.size()) != config_.levels())
        throw DimensionError("control residuals must have one entry per level");
    for (int64_t l = config_.levels() - 1; l >= 0; --l) {
        Var skip = skips[static_cast<size_t>(l)];
        if (control) {
            const Var& r = control->levels[static_cast<size_t>(l)];
            const Shape want = skip_shape(l, b);
            if (r.shape() != want)
                throw DimensionError("control residual level " + std::to_string(l) + " must be " + shape_str(want) +
                                     ", got " + shape_str(r.shape()));
            skip = ag::add(skip, ag::repeat_rows(r, frames));
        }
        h = decoder_[static_cast<size_t>(l)](ag::concat_channels(h, skip), temb, context, frames, overlay);
        if (l > 0) h = upsample_[static_cast<size_t>(l)](ag::upsample_nearest2x(h));
    }
    Var out = out_conv_(ag::silu(out_norm_(h)));
    return frames_to_latent(out, b, frames);
}

Shape DenoiserNet::skip_shape(int64_t level, int64_t batch) const {
    const int64_t res = config_.resolution >> level;
    return {batch, config_.channels(level), res, res};
}

nn::ParamSet DenoiserNet::parameters() const {
    nn::ParamSet ps;
    text_.collect("text", ps);
    time_.collect("time", ps);
    encoder_.collect("enc", ps);
    mid_.collect("mid", ps);
    for (size_t l = 0; l < decoder_.size(); ++l) {
        decoder_[l].collect("dec." + std::to_string(l), ps);
        if (l > 0) upsample_[l].collect("dec.up" + std::to_string(l), ps);
    }
    out_norm_.collect("out.norm", ps);
    out_conv_.collect("out.conv", ps);
    return ps;
}

std::vector<const TemporalLayer*> DenoiserNet::temporal_layers() const {
    std::vector<const TemporalLayer*> out;
    for (const auto& b : encoder_.blocks) out.push_back(&b.temporal);
    out.push_back(&mid_.temporal);
    for (auto it = decoder_.rbegin(); it != decoder_.rend(); ++it) out.push_back(&it->temporal);
    return out;
}

Tensor denoise(const DenoiserNet& net, const Tensor& z_t, int64_t t, const TextEmbedding& text,
               const ControlResiduals* control, const MotionOverlay* overlay) {
    ag::NoGradGuard guard;
    const int64_t b = z_t.shape().at(0);
    std::vector<int64_t> ts(static_cast<size_t>(b), t);
    std::vector<Var> rows(static_cast<size_t>(b), ag::constant(text.tokens));
    return net.forward(ag::constant(z_t), ts, stack_text(rows), control, overlay).value();
}

}  // namespace mcam
