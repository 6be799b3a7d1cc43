#pragma once

// Condition-image control branch, adaptive pixel normalization and
// randomized first-frame latent blending.

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mcam/diffusion.hpp"
#include "mcam/video_unet.hpp"

namespace mcam {

inline constexpr double kDefaultBlendLambda = 0.5;
inline constexpr double kStdEpsilon = 1e-6;

struct ChannelStats {
    std::array<double, 3> mean{};
    std::array<double, 3> std{};
};

// Population mean and standard deviation per RGB channel of an [H, W, 3] image.
ChannelStats channel_stats(const Tensor& image);
// Pooled over all frames of a clip.
ChannelStats clip_channel_stats(const VideoClip& clip);

struct ConditionContext {
    Tensor cond_image;   // [H, W, 3]
    Tensor cond_latent;  // [c, h, w]
    ChannelStats stats;
    Tensor noise;        // fixed per generation, [c, h, w]

    static ConditionContext make(const Tensor& image, const LatentCodec& codec, uint64_t noise_seed);
    // z_t^cond = forward noising of cond_latent with the fixed noise.
    Tensor noised(int64_t t, const NoiseSchedule& schedule) const;
};

// Copy of the denoiser encoder (no text cross-attention) fed only the condition
// latent, with zero-initialized 1x1 projections into the decoder skip inlets.
class ControlEncoder {
public:
    ControlEncoder(const DenoiserNet& net, uint64_t seed);

    // cond [b, c, h, w]; one timestep per batch entry. Residuals carry gradients.
    ControlResiduals forward(const Var& cond, std::span<const int64_t> timesteps) const;
    nn::ParamSet parameters() const;
    int64_t levels() const { return static_cast<int64_t>(proj_.size()); }

private:
    UNetConfig config_;
    TimeEmbedding time_;
    EncoderStack encoder_;
    std::vector<nn::Conv2d> proj_;
};

// Residuals for a batch of `batch` identical condition entries, no graph recorded.
ControlResiduals encode_condition(const ControlEncoder& encoder, const ConditionContext& ctx, int64_t t,
                                  int64_t batch = 1);

enum class PixelNormMode { PerFrame, PerClip };

std::string pixel_norm_mode_name(PixelNormMode mode);
PixelNormMode parse_pixel_norm_mode(const std::string& name);

struct PixelNormDiagnostics {
    // "frame <i> channel <c>" (per-frame) or "channel <c>" (per-clip) that got only the mean shift.
    std::vector<std::string> degenerate;
};

// frame^ch <- (frame^ch - mean^ch) / std^ch * target_std^ch + target_mean^ch, then clamp to [0, 1].
VideoClip adaptive_pixel_normalization(const VideoClip& frames, const ChannelStats& target, PixelNormMode mode,
                                       PixelNormDiagnostics* diagnostics = nullptr);
VideoClip adaptive_pixel_normalization(const VideoClip& frames, const ConditionContext& ctx, PixelNormMode mode,
                                       PixelNormDiagnostics* diagnostics = nullptr);

struct BlendConfig {
    double lambda = kDefaultBlendLambda;
    int64_t min_t = 0;  // blending active for min_t <= t <= max_t
    int64_t max_t = std::numeric_limits<int64_t>::max();
    uint64_t seed = 0;

    void validate() const;
    bool active(int64_t t) const { return t >= min_t && t <= max_t; }
};

// Draws one uniform u per call (also outside the active range) and returns
// z_t^cond when the step is active and u < lambda, else the input.
Tensor randomized_blend(const Tensor& z_t_first, const ConditionContext& ctx, int64_t t, const BlendConfig& cfg,
                        Rng& rng, const NoiseSchedule& schedule, bool* replaced = nullptr);

// Sampler hook applying randomized_blend to frame 0 of every batch entry.
// `replaced_count`, when given, counts replacement events.
BlendHook make_blend_hook(const ConditionContext& ctx, const BlendConfig& cfg, const NoiseSchedule& schedule,
                          int64_t* replaced_count = nullptr);

}  // namespace mcam
