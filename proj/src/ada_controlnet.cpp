#include "mcam/ada_controlnet.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "mcam/errors.hpp"

namespace mcam {

ChannelStats channel_stats(const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("channel_stats expects [H, W, 3]");
    ChannelStats s;
    const int64_t n = image.dim(0) * image.dim(1);
    for (int c = 0; c < 3; ++c) {
        double sum = 0;
        for (int64_t p = 0; p < n; ++p) sum += image[p * 3 + c];
        const double mean = sum / static_cast<double>(n);
        double var = 0;
        for (int64_t p = 0; p < n; ++p) {
            const double d = image[p * 3 + c] - mean;
            var += d * d;
        }
        s.mean[c] = mean;
        s.std[c] = std::sqrt(var / static_cast<double>(n));
    }
    return s;
}

ChannelStats clip_channel_stats(const VideoClip& clip) {
    const Tensor pooled = clip.frames.reshaped({clip.num_frames() * clip.height(), clip.width(), 3});
    return channel_stats(pooled);
}

ConditionContext ConditionContext::make(const Tensor& image, const LatentCodec& codec, uint64_t noise_seed) {
    ConditionContext ctx;
    ctx.cond_image = image;
    ctx.cond_latent = codec.encode_frame(image);
    ctx.stats = channel_stats(image);
    Rng rng(noise_seed);
    ctx.noise = rng.normal_tensor(ctx.cond_latent.shape());
    return ctx;
}

Tensor ConditionContext::noised(int64_t t, const NoiseSchedule& schedule) const {
    return forward_noise_coeff(cond_latent, noise, schedule.alpha_bar_at(t));
}

// ---------------------------------------------------------------- control encoder

namespace {

void copy_matching(const nn::ParamSet& src, const std::string& src_prefix, const nn::ParamSet& dst,
                   const std::string& dst_prefix) {
    for (const auto& [name, var] : dst.items()) {
        const std::string key = src_prefix + name.substr(dst_prefix.size());
        if (!src.contains(key)) throw DimensionError("control encoder parameter " + name + " has no source " + key);
        Var target = var;
        if (target.shape() != src.at(key).shape()) throw DimensionError("control encoder shape mismatch at " + name);
        target.mutable_value() = src.at(key).value();
    }
}

}  // namespace

ControlEncoder::ControlEncoder(const DenoiserNet& net, uint64_t seed) : config_(net.config()) {
    Rng rng(seed);
    time_ = TimeEmbedding(rng, config_.base_width, config_.temb_dim());
    encoder_ = EncoderStack(rng, config_, "ctl", false);
    for (int64_t l = 0; l < config_.levels(); ++l) {
        nn::Conv2d p(rng, config_.channels(l), config_.channels(l), 1, 1, true);
        proj_.push_back(p);
    }
    nn::ParamSet src;
    net.time_embedding().collect("time", src);
    net.encoder().collect("enc", src);
    nn::ParamSet dst_time, dst_enc;
    time_.collect("ctl.time", dst_time);
    encoder_.collect("ctl.enc", dst_enc);
    copy_matching(src, "time", dst_time, "ctl.time");
    copy_matching(src, "enc", dst_enc, "ctl.enc");
}

ControlResiduals ControlEncoder::forward(const Var& cond, std::span<const int64_t> timesteps) const {
    const auto& s = cond.shape();
    if (s.size() != 4 || s[1] != config_.in_channels)
        throw DimensionError("condition latent must be [b, " + std::to_string(config_.in_channels) + ", h, w], got " +
                             shape_str(s));
    if (s[2] != config_.resolution || s[3] != config_.resolution)
        throw DimensionError("condition latent spatial size " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                             " does not match the denoiser's " + std::to_string(config_.resolution));
    if (static_cast<int64_t>(timesteps.size()) != s[0]) throw DimensionError("one timestep per condition required");
    for (auto t : timesteps)
        if (t < 0 || t > config_.max_timestep) throw ParameterError("timestep outside embedding range");
    const Var temb = time_(timesteps);
    const std::vector<Var> feats = encoder_(cond, temb, Var(), 1, nullptr);
    ControlResiduals out;
    for (size_t l = 0; l < feats.size(); ++l) out.levels.push_back(proj_[l](feats[l]));
    return out;
}

nn::ParamSet ControlEncoder::parameters() const {
    nn::ParamSet ps;
    time_.collect("ctl.time", ps);
    encoder_.collect("ctl.enc", ps);
    for (size_t l = 0; l < proj_.size(); ++l) proj_[l].collect("ctl.proj" + std::to_string(l), ps);
    return ps;
}

ControlResiduals encode_condition(const ControlEncoder& encoder, const ConditionContext& ctx, int64_t t,
                                  int64_t batch) {
    ag::NoGradGuard guard;
    const Tensor& z = ctx.cond_latent;
    const Var cond = ag::constant(z.reshaped({1, z.dim(0), z.dim(1), z.dim(2)}));
    const int64_t ts[1] = {t};
    ControlResiduals r = encoder.forward(cond, ts);
    if (batch > 1)
        for (auto& level : r.levels) level = ag::repeat_rows(level, batch);
    return r;
}

// ---------------------------------------------------------------- pixel normalization

std::string pixel_norm_mode_name(PixelNormMode mode) { return mode == PixelNormMode::PerFrame ? "per-frame" : "per-clip"; }

PixelNormMode parse_pixel_norm_mode(const std::string& name) {
    if (name == "per-frame" || name == "per_frame") return PixelNormMode::PerFrame;
    if (name == "per-clip" || name == "per_clip") return PixelNormMode::PerClip;
    throw ParameterError("unknown pixel normalization mode '" + name + "'");
}

namespace {

void apply_affine(float* frame, int64_t pixels, const ChannelStats& from, const ChannelStats& to, int c,
                  bool degenerate) {
    const double scale = degenerate ? 1.0 : to.std[c] / from.std[c];
    for (int64_t p = 0; p < pixels; ++p) {
        const double v = (frame[p * 3 + c] - from.mean[c]) * scale + to.mean[c];
        frame[p * 3 + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
}

}  // namespace

VideoClip adaptive_pixel_normalization(const VideoClip& frames, const ChannelStats& target, PixelNormMode mode,
                                       PixelNormDiagnostics* diagnostics) {
    if (frames.num_frames() < 1) throw InputError("pixel normalization needs at least one frame");
    VideoClip out = frames;
    const int64_t pixels = frames.height() * frames.width();
    if (mode == PixelNormMode::PerFrame) {
        for (int64_t i = 0; i < frames.num_frames(); ++i) {
            const ChannelStats from = channel_stats(frames.frame(i));
            for (int c = 0; c < 3; ++c) {
                const bool degenerate = from.std[c] < kStdEpsilon;
                if (degenerate && diagnostics)
                    diagnostics->degenerate.push_back("frame " + std::to_string(i) + " channel " + std::to_string(c));
                apply_affine(out.frame_data(i), pixels, from, target, c, degenerate);
            }
        }
    } else {
        const ChannelStats from = clip_channel_stats(frames);
        for (int c = 0; c < 3; ++c) {
            const bool degenerate = from.std[c] < kStdEpsilon;
            if (degenerate && diagnostics) diagnostics->degenerate.push_back("channel " + std::to_string(c));
            for (int64_t i = 0; i < frames.num_frames(); ++i)
                apply_affine(out.frame_data(i), pixels, from, target, c, degenerate);
        }
    }
    return out;
}

VideoClip adaptive_pixel_normalization(const VideoClip& frames, const ConditionContext& ctx, PixelNormMode mode,
                                       PixelNormDiagnostics* diagnostics) {
    return adaptive_pixel_normalization(frames, ctx.stats, mode, diagnostics);
}

// ---------------------------------------------------------------- randomized blending

void BlendConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ParameterError("blend lambda must lie in [0, 1]");
}

Tensor randomized_blend(const Tensor& z_t_first, const ConditionContext& ctx, int64_t t, const BlendConfig& cfg,
                        Rng& rng, const NoiseSchedule& schedule, bool* replaced) {
    cfg.validate();
    const double u = rng.uniform_double();
    const bool swap = cfg.active(t) && u < cfg.lambda;
    if (replaced) *replaced = swap;
    if (!swap) return z_t_first;
    if (z_t_first.shape() != ctx.cond_latent.shape())
        throw DimensionError("blend: latent frame " + shape_str(z_t_first.shape()) + " vs condition " +
                             shape_str(ctx.cond_latent.shape()));
    return ctx.noised(t, schedule);
}

BlendHook make_blend_hook(const ConditionContext& ctx, const BlendConfig& cfg, const NoiseSchedule& schedule,
                          int64_t* replaced_count) {
    cfg.validate();
    auto rng = std::make_shared<Rng>(cfg.seed);
    return [&ctx, cfg, &schedule, rng, replaced_count](LatentVideo& z, int64_t t) {
        bool replaced = false;
        const Tensor first = z.frame(0, 0);
        const Tensor blended = randomized_blend(first, ctx, t, cfg, *rng, schedule, &replaced);
        if (!replaced) return;
        if (replaced_count) ++*replaced_count;
        for (int64_t b = 0; b < z.batch(); ++b) z.set_frame(b, 0, blended);
    };
}

}  // namespace mcam
