#pragma once

// Noise schedule, forward noising, the noise-prediction loss, the latent
// codec and the DDIM reverse sampler.

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcam/rng.hpp"
#include "mcam/video.hpp"
#include "mcam/video_unet.hpp"

namespace mcam {

enum class ScheduleKind { Linear, ScaledLinear };

std::string schedule_kind_name(ScheduleKind kind);
ScheduleKind parse_schedule_kind(const std::string& name);

struct NoiseSchedule {
    int64_t T = 0;
    ScheduleKind kind = ScheduleKind::Linear;
    double beta_min = 0.0, beta_max = 0.0;
    std::vector<double> beta;       // beta[t - 1], t = 1..T
    std::vector<double> alpha_bar;  // alpha_bar[t - 1]

    double beta_at(int64_t t) const;
    // t = 0 is the clean latent (alpha_bar = 1).
    double alpha_bar_at(int64_t t) const;
    void validate() const;
};

NoiseSchedule build_schedule(int64_t T, ScheduleKind kind, double beta_min, double beta_max);
NoiseSchedule schedule_from_betas(std::vector<double> betas);

void to_json(nlohmann::json& j, const NoiseSchedule& s);
NoiseSchedule schedule_from_json(const nlohmann::json& j);

struct LatentVideo {
    Tensor data;  // [b, c, f, h, w]
    int64_t step = 0;

    LatentVideo() = default;
    explicit LatentVideo(Tensor d, int64_t t = 0) : data(std::move(d)), step(t) {}

    int64_t batch() const { return data.dim(0); }
    int64_t channels() const { return data.dim(1); }
    int64_t frames() const { return data.dim(2); }
    int64_t height() const { return data.dim(3); }
    int64_t width() const { return data.dim(4); }
    const Shape& shape() const { return data.shape(); }
    void validate() const;

    // Frame i of batch entry b as [c, h, w].
    Tensor frame(int64_t b, int64_t i) const;
    void set_frame(int64_t b, int64_t i, const Tensor& value);
};

// Pixel video <-> latent. Implementations declare their round-trip tolerance.
class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual std::string name() const = 0;
    virtual int64_t downscale() const = 0;
    virtual int64_t latent_channels() const = 0;
    virtual float tolerance() const = 0;
    // Latent value range of encoded [0, 1] pixels; used to clip x0 predictions.
    virtual float latent_min() const = 0;
    virtual float latent_max() const = 0;
    // image [H, W, 3] -> [c, h, w]
    virtual Tensor encode_frame(const Tensor& image) const = 0;
    // [c, h, w] -> image [H, W, 3], clamped to [0, 1]
    virtual Tensor decode_frame(const Tensor& latent) const = 0;

    LatentVideo encode(const VideoClip& clip) const;
    LatentVideo encode_batch(const std::vector<const VideoClip*>& clips) const;
    VideoClip decode(const LatentVideo& z, int64_t batch_index = 0) const;
};

// Pixel-space codec: optional space-to-depth folding by `factor` and an
// optional affine map [0, 1] -> [-1, 1]. factor 1 without centering is the identity.
class PixelCodec final : public LatentCodec {
public:
    explicit PixelCodec(int64_t factor = 1, bool centered = false);

    std::string name() const override;
    int64_t downscale() const override { return factor_; }
    int64_t latent_channels() const override { return 3 * factor_ * factor_; }
    float tolerance() const override { return centered_ ? 1e-6f : 0.0f; }
    float latent_min() const override { return centered_ ? -1.0f : 0.0f; }
    float latent_max() const override { return 1.0f; }
    Tensor encode_frame(const Tensor& image) const override;
    Tensor decode_frame(const Tensor& latent) const override;

private:
    int64_t factor_;
    bool centered_;
};

// Lossy stand-in for a learned autoencoder: area average over factor x factor
// blocks on encode, bilinear upsampling on decode; latents in [-1, 1].
class BoxCodec final : public LatentCodec {
public:
    explicit BoxCodec(int64_t factor);

    std::string name() const override { return "box:s" + std::to_string(factor_); }
    int64_t downscale() const override { return factor_; }
    int64_t latent_channels() const override { return 3; }
    float tolerance() const override { return std::numeric_limits<float>::infinity(); }
    float latent_min() const override { return -1.0f; }
    float latent_max() const override { return 1.0f; }
    Tensor encode_frame(const Tensor& image) const override;
    Tensor decode_frame(const Tensor& latent) const override;

private:
    int64_t factor_;
};

// "identity", "pixel:s<factor>[:centered]" or "box:s<factor>".
std::shared_ptr<const LatentCodec> make_codec(const std::string& name);

// z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps
LatentVideo forward_noise(const LatentVideo& z0, const LatentVideo& eps, int64_t t, const NoiseSchedule& schedule);
Tensor forward_noise_coeff(const Tensor& z0, const Tensor& eps, double alpha_bar);

// Noise predictor over a noised batch; lets callers substitute an oracle for the net.
using NoisePredictor = std::function<Var(const Var& z_t, std::span<const int64_t> t)>;

// Mean squared error between the drawn noise and its prediction. One timestep per batch entry.
Var training_loss(const NoisePredictor& predictor, const LatentVideo& z0, std::span<const int64_t> t,
                  const NoiseSchedule& schedule, Rng& rng, int64_t step_index = 0);
Var training_loss(const DenoiserNet& net, const LatentVideo& z0, std::span<const int64_t> t, const Var& text,
                  const ControlResiduals* control, const MotionOverlay* overlay, const NoiseSchedule& schedule,
                  Rng& rng, int64_t step_index = 0);

struct SamplerConfig {
    int64_t steps = 25;
    float guidance = 1.0f;  // 1 = conditional prediction only
    bool stochastic = false;  // DDPM-style (eta = 1) instead of deterministic DDIM
    bool clip_x0 = true;
    float clip_min = -1.0f, clip_max = 1.0f;
};

// Invoked once per reverse step with the current latent before the denoiser call.
using BlendHook = std::function<void(LatentVideo& z, int64_t t)>;
using ControlProvider = std::function<ControlResiduals(int64_t t)>;

struct SampleExtras {
    const MotionOverlay* overlay = nullptr;
    ControlProvider control;
};

// Descending timesteps, evenly strided, ending at t = 1.
std::vector<int64_t> ddim_timesteps(int64_t T, int64_t steps);

LatentVideo sample(const DenoiserNet& net, const Shape& shape, const TextEmbedding& text,
                   const NoiseSchedule& schedule, const SamplerConfig& cfg, const BlendHook& blend_hook, Rng& rng,
                   const SampleExtras& extras = {});

}  // namespace mcam
