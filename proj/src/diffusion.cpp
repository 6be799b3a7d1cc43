#include "mcam/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "mcam/errors.hpp"

namespace mcam {

std::string schedule_kind_name(ScheduleKind kind) {
    return kind == ScheduleKind::Linear ? "linear" : "scaled_linear";
}

ScheduleKind parse_schedule_kind(const std::string& name) {
    if (name == "linear") return ScheduleKind::Linear;
    if (name == "scaled_linear") return ScheduleKind::ScaledLinear;
    throw ParameterError("unknown schedule kind '" + name + "'");
}

double NoiseSchedule::beta_at(int64_t t) const {
    if (t < 1 || t > T) throw ParameterError("timestep " + std::to_string(t) + " outside 1.." + std::to_string(T));
    return beta[static_cast<size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar_at(int64_t t) const {
    if (t == 0) return 1.0;
    if (t < 0 || t > T) throw ParameterError("timestep " + std::to_string(t) + " outside 0.." + std::to_string(T));
    return alpha_bar[static_cast<size_t>(t - 1)];
}

void NoiseSchedule::validate() const {
    if (T < 1 || beta.size() != static_cast<size_t>(T) || alpha_bar.size() != static_cast<size_t>(T))
        throw ParameterError("schedule arrays do not match T");
    double prev = 1.0;
    for (int64_t t = 0; t < T; ++t) {
        if (!(beta[t] > 0.0 && beta[t] < 1.0)) throw ParameterError("beta outside (0, 1)");
        if (!(alpha_bar[t] < prev)) throw ParameterError("alpha_bar not strictly decreasing");
        prev = alpha_bar[t];
    }
}

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
    if (betas.empty()) throw ParameterError("T must be >= 1");
    NoiseSchedule s;
    s.T = static_cast<int64_t>(betas.size());
    s.beta = std::move(betas);
    s.beta_min = *std::min_element(s.beta.begin(), s.beta.end());
    s.beta_max = *std::max_element(s.beta.begin(), s.beta.end());
    s.alpha_bar.resize(s.beta.size());
    double prod = 1.0;
    for (size_t i = 0; i < s.beta.size(); ++i) {
        if (!(s.beta[i] > 0.0 && s.beta[i] < 1.0)) throw ParameterError("beta[" + std::to_string(i + 1) + "] outside (0, 1)");
        prod *= 1.0 - s.beta[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

NoiseSchedule build_schedule(int64_t T, ScheduleKind kind, double beta_min, double beta_max) {
    if (T < 1) throw ParameterError("T must be >= 1, got " + std::to_string(T));
    if (!(beta_min > 0.0)) throw ParameterError("beta_min must be > 0");
    if (!(beta_max < 1.0)) throw ParameterError("beta_max must be < 1");
    if (!(beta_min <= beta_max)) throw ParameterError("beta_min must be <= beta_max");
    std::vector<double> betas(static_cast<size_t>(T));
    for (int64_t i = 0; i < T; ++i) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
        if (kind == ScheduleKind::Linear) {
            betas[i] = beta_min + frac * (beta_max - beta_min);
        } else {
            const double r = std::sqrt(beta_min) + frac * (std::sqrt(beta_max) - std::sqrt(beta_min));
            betas[i] = r * r;
        }
    }
    NoiseSchedule s = schedule_from_betas(std::move(betas));
    s.kind = kind;
    s.beta_min = beta_min;
    s.beta_max = beta_max;
    return s;
}

void to_json(nlohmann::json& j, const NoiseSchedule& s) {
    j = {{"T", s.T}, {"kind", schedule_kind_name(s.kind)}, {"beta_min", s.beta_min}, {"beta_max", s.beta_max}};
}

NoiseSchedule schedule_from_json(const nlohmann::json& j) {
    return build_schedule(j.at("T").get<int64_t>(), parse_schedule_kind(j.at("kind").get<std::string>()),
                          j.at("beta_min").get<double>(), j.at("beta_max").get<double>());
}

void LatentVideo::validate() const {
    if (data.rank() != 5) throw DimensionError("latent must have 5 axes, got " + shape_str(data.shape()));
    for (int64_t d : data.shape())
        if (d < 1) throw DimensionError("latent axes must be >= 1, got " + shape_str(data.shape()));
    if (!data.all_finite()) throw NumericError("latent holds non-finite values");
}

Tensor LatentVideo::frame(int64_t b, int64_t i) const {
    const int64_t c = channels(), f = frames(), hw = height() * width();
    Tensor out(Shape{c, height(), width()});
    for (int64_t ch = 0; ch < c; ++ch)
        std::copy_n(data.data() + ((b * c + ch) * f + i) * hw, hw, out.data() + ch * hw);
    return out;
}

void LatentVideo::set_frame(int64_t b, int64_t i, const Tensor& value) {
    const int64_t c = channels(), f = frames(), hw = height() * width();
    if (value.shape() != Shape{c, height(), width()}) throw DimensionError("latent frame shape mismatch");
    for (int64_t ch = 0; ch < c; ++ch)
        std::copy_n(value.data() + ch * hw, hw, data.data() + ((b * c + ch) * f + i) * hw);
}

LatentVideo LatentCodec::encode(const VideoClip& clip) const { return encode_batch({&clip}); }

LatentVideo LatentCodec::encode_batch(const std::vector<const VideoClip*>& clips) const {
    if (clips.empty()) throw ParameterError("encode: no clips");
    const int64_t f = clips[0]->num_frames();
    const int64_t s = downscale();
    if (clips[0]->height() % s || clips[0]->width() % s)
        throw DimensionError("frame size not divisible by codec factor " + std::to_string(s));
    const int64_t c = latent_channels(), h = clips[0]->height() / s, w = clips[0]->width() / s;
    LatentVideo z(Tensor(Shape{static_cast<int64_t>(clips.size()), c, f, h, w}));
    for (size_t b = 0; b < clips.size(); ++b) {
        const VideoClip& clip = *clips[b];
        if (clip.num_frames() != f || clip.height() != h * s || clip.width() != w * s)
            throw DimensionError("encode_batch: clips differ in shape");
        for (int64_t i = 0; i < f; ++i) z.set_frame(static_cast<int64_t>(b), i, encode_frame(clip.frame(i)));
    }
    return z;
}

VideoClip LatentCodec::decode(const LatentVideo& z, int64_t batch_index) const {
    const int64_t s = downscale();
    VideoClip clip(z.frames(), z.height() * s, z.width() * s);
    for (int64_t i = 0; i < z.frames(); ++i) clip.set_frame(i, decode_frame(z.frame(batch_index, i)));
    return clip;
}

PixelCodec::PixelCodec(int64_t factor, bool centered) : factor_(factor), centered_(centered) {
    if (factor < 1) throw ParameterError("codec factor must be >= 1");
}

std::string PixelCodec::name() const {
    if (factor_ == 1 && !centered_) return "identity";
    return "pixel:s" + std::to_string(factor_) + (centered_ ? ":centered" : "");
}

Tensor PixelCodec::encode_frame(const Tensor& image) const {
    const int64_t H = image.dim(0), W = image.dim(1), s = factor_;
    const int64_t h = H / s, w = W / s, c = 3 * s * s;
    Tensor out(Shape{c, h, w});
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            for (int64_t ch = 0; ch < 3; ++ch) {
                const int64_t lc = (ch * s + y % s) * s + x % s;
                const float v = image[(y * W + x) * 3 + ch];
                out[(lc * h + y / s) * w + x / s] = centered_ ? 2.0f * v - 1.0f : v;
            }
    return out;
}

Tensor PixelCodec::decode_frame(const Tensor& latent) const {
    const int64_t s = factor_, h = latent.dim(1), w = latent.dim(2);
    const int64_t H = h * s, W = w * s;
    Tensor out(Shape{H, W, 3});
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            for (int64_t ch = 0; ch < 3; ++ch) {
                const int64_t lc = (ch * s + y % s) * s + x % s;
                float v = latent[(lc * h + y / s) * w + x / s];
                if (centered_) v = (v + 1.0f) * 0.5f;
                out[(y * W + x) * 3 + ch] = std::clamp(v, 0.0f, 1.0f);
            }
    return out;
}

BoxCodec::BoxCodec(int64_t factor) : factor_(factor) {
    if (factor < 1) throw ParameterError("codec factor must be >= 1");
}

Tensor BoxCodec::encode_frame(const Tensor& image) const {
    const int64_t H = image.dim(0), W = image.dim(1), s = factor_;
    const int64_t h = H / s, w = W / s;
    Tensor out(Shape{3, h, w});
    const double inv = 1.0 / static_cast<double>(s * s);
    for (int64_t ch = 0; ch < 3; ++ch)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double sum = 0.0;
                for (int64_t dy = 0; dy < s; ++dy)
                    for (int64_t dx = 0; dx < s; ++dx) sum += image[((y * s + dy) * W + x * s + dx) * 3 + ch];
                out[(ch * h + y) * w + x] = static_cast<float>(2.0 * sum * inv - 1.0);
            }
    return out;
}

Tensor BoxCodec::decode_frame(const Tensor& latent) const {
    const int64_t s = factor_, h = latent.dim(1), w = latent.dim(2);
    const int64_t H = h * s, W = w * s;
    Tensor out(Shape{H, W, 3});
    for (int64_t y = 0; y < H; ++y) {
        const double sy = std::clamp((y + 0.5) / s - 0.5, 0.0, static_cast<double>(h - 1));
        const auto y0 = static_cast<int64_t>(sy);
        const int64_t y1 = std::min(y0 + 1, h - 1);
        const double fy = sy - y0;
        for (int64_t x = 0; x < W; ++x) {
            const double sx = std::clamp((x + 0.5) / s - 0.5, 0.0, static_cast<double>(w - 1));
            const auto x0 = static_cast<int64_t>(sx);
            const int64_t x1 = std::min(x0 + 1, w - 1);
            const double fx = sx - x0;
            for (int64_t ch = 0; ch < 3; ++ch) {
                const float* p = latent.data() + ch * h * w;
                const double top = p[y0 * w + x0] * (1 - fx) + p[y0 * w + x1] * fx;
                const double bot = p[y1 * w + x0] * (1 - fx) + p[y1 * w + x1] * fx;
                const double v = (top * (1 - fy) + bot * fy + 1.0) * 0.5;
                out[(y * W + x) * 3 + ch] = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

std::shared_ptr<const LatentCodec> make_codec(const std::string& name) {
    if (name == "identity") return std::make_shared<PixelCodec>(1, false);
    if (name.rfind("box:s", 0) == 0) {
        try {
            size_t used = 0;
            const int64_t f = std::stoll(name.substr(5), &used);
            if (used + 5 == name.size()) return std::make_shared<BoxCodec>(f);
        } catch (const std::logic_error&) {
        }
        throw ParameterError("bad codec factor in '" + name + "'");
    }
    if (name.rfind("pixel:s", 0) == 0) {
        std::string rest = name.substr(7);
        bool centered = false;
        if (const auto colon = rest.find(':'); colon != std::string::npos) {
            if (rest.substr(colon + 1) != "centered") throw ParameterError("unknown codec option in '" + name + "'");
            centered = true;
            rest = rest.substr(0, colon);
        }
        try {
            return std::make_shared<PixelCodec>(std::stoll(rest), centered);
        } catch (const std::logic_error&) {
            throw ParameterError("bad codec factor in '" + name + "'");
        }
    }
    throw ParameterError("unknown codec '" + name + "'");
}

Tensor forward_noise_coeff(const Tensor& z0, const Tensor& eps, double alpha_bar) {
    if (z0.shape() != eps.shape())
        throw DimensionError("forward_noise: z0 " + shape_str(z0.shape()) + " vs eps " + shape_str(eps.shape()));
    const float a = static_cast<float>(std::sqrt(alpha_bar));
    const float b = static_cast<float>(std::sqrt(1.0 - alpha_bar));
    Tensor out(z0.shape());
    for (int64_t i = 0; i < z0.numel(); ++i) out[i] = a * z0[i] + b * eps[i];
    return out;
}

LatentVideo forward_noise(const LatentVideo& z0, const LatentVideo& eps, int64_t t, const NoiseSchedule& schedule) {
    if (t < 1 || t > schedule.T) throw ParameterError("forward_noise: t outside 1.." + std::to_string(schedule.T));
    return LatentVideo(forward_noise_coeff(z0.data, eps.data, schedule.alpha_bar_at(t)), t);
}

Var training_loss(const NoisePredictor& predictor, const LatentVideo& z0, std::span<const int64_t> t,
                  const NoiseSchedule& schedule, Rng& rng, int64_t step_index) {
    const int64_t b = z0.batch();
    if (static_cast<int64_t>(t.size()) != b) throw DimensionError("training_loss: one timestep per batch entry");
    const Tensor eps = rng.normal_tensor(z0.shape());
    Tensor z_t(z0.shape());
    const int64_t per = z0.data.numel() / b;
    for (int64_t i = 0; i < b; ++i) {
        if (t[i] < 1 || t[i] > schedule.T) throw ParameterError("training_loss: t outside schedule");
        const double ab = schedule.alpha_bar_at(t[i]);
        const float ca = static_cast<float>(std::sqrt(ab)), cb = static_cast<float>(std::sqrt(1.0 - ab));
        for (int64_t k = i * per; k < (i + 1) * per; ++k) z_t[k] = ca * z0.data[k] + cb * eps[k];
    }
    Var pred = predictor(ag::constant(std::move(z_t)), t);
    if (!pred.value().all_finite())
        throw NumericError("non-finite noise prediction at step " + std::to_string(step_index));
    Var loss = ag::mse(pred, eps);
    if (!std::isfinite(loss.value()[0])) throw NumericError("non-finite loss at step " + std::to_string(step_index));
    return loss;
}

Var training_loss(const DenoiserNet& net, const LatentVideo& z0, std::span<const int64_t> t, const Var& text,
                  const ControlResiduals* control, const MotionOverlay* overlay, const NoiseSchedule& schedule,
                  Rng& rng, int64_t step_index) {
    auto predictor = [&](const Var& z_t, std::span<const int64_t> ts) { return net.forward(z_t, ts, text, control, overlay); };
    return training_loss(predictor, z0, t, schedule, rng, step_index);
}

std::vector<int64_t> ddim_timesteps(int64_t T, int64_t steps) {
    if (steps < 1) throw ParameterError("sampler steps must be >= 1");
    if (steps > T) throw ParameterError("sampler steps " + std::to_string(steps) + " exceed T = " + std::to_string(T));
    const int64_t ratio = T / steps;
    std::vector<int64_t> ts;
    for (int64_t i = steps - 1; i >= 0; --i) ts.push_back(i * ratio + 1);
    return ts;
}

namespace {

Tensor predict_eps(const DenoiserNet& net, const Tensor& z, int64_t t, const TextEmbedding& text,
                   const TextEmbedding& null_text, const SamplerConfig& cfg, const SampleExtras& extras) {
    ControlResiduals control;
    const ControlResiduals* control_ptr = nullptr;
    if (extras.control) {
        control = extras.control(t);
        control_ptr = &control;
    }
    Tensor eps = denoise(net, z, t, text, control_ptr, extras.overlay);
    if (cfg.guidance != 1.0f) {
        const Tensor uncond = denoise(net, z, t, null_text, control_ptr, extras.overlay);
        for (int64_t i = 0; i < eps.numel(); ++i) eps[i] = uncond[i] + cfg.guidance * (eps[i] - uncond[i]);
    }
    return eps;
}

}  // namespace

LatentVideo sample(const DenoiserNet& net, const Shape& shape, const TextEmbedding& text,
                   const NoiseSchedule& schedule, const SamplerConfig& cfg, const BlendHook& blend_hook, Rng& rng,
                   const SampleExtras& extras) {
    if (cfg.guidance < 0.0f) throw ParameterError("guidance must be >= 0");
    const std::vector<int64_t> ts = ddim_timesteps(schedule.T, cfg.steps);
    LatentVideo z(rng.normal_tensor(shape), schedule.T);
    z.validate();
    const TextEmbedding null_text = cfg.guidance != 1.0f ? net.text_embedder().null_embedding() : TextEmbedding{};

    for (size_t k = 0; k < ts.size(); ++k) {
        const int64_t t = ts[k];
        const int64_t t_prev = k + 1 < ts.size() ? ts[k + 1] : 0;
        z.step = t;
        if (blend_hook) blend_hook(z, t);
        const Tensor eps = predict_eps(net, z.data, t, text, null_text, cfg, extras);
        if (!eps.all_finite()) throw NumericError("non-finite noise prediction at t = " + std::to_string(t));

        const double ab = schedule.alpha_bar_at(t), ab_prev = schedule.alpha_bar_at(t_prev);
        const float sa = static_cast<float>(std::sqrt(ab)), sb = static_cast<float>(std::sqrt(1.0 - ab));
        double sigma = 0.0;
        if (cfg.stochastic) sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev));
        const float c_x0 = static_cast<float>(std::sqrt(ab_prev));
        const float c_eps = static_cast<float>(std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma)));
        Tensor noise;
        if (sigma > 0.0) noise = rng.normal_tensor(shape);

        Tensor& d = z.data;
        for (int64_t i = 0; i < d.numel(); ++i) {
            float x0 = (d[i] - sb * eps[i]) / sa;
            float e = eps[i];
            if (cfg.clip_x0) {
                const float clipped = std::clamp(x0, cfg.clip_min, cfg.clip_max);
                if (clipped != x0) {
                    x0 = clipped;
                    e = (d[i] - sa * x0) / sb;
                }
            }
            d[i] = c_x0 * x0 + c_eps * e;
            if (sigma > 0.0) d[i] += static_cast<float>(sigma) * noise[i];
        }
    }
    z.step = 0;
    return z;
}

}  // namespace mcam
