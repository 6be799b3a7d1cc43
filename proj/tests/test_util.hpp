#pragma once

#include <string>
#include <vector>

#include "mcam/diffusion.hpp"
#include "mcam/rng.hpp"
#include "mcam/training.hpp"
#include "mcam/video_unet.hpp"

namespace mcam::testing {

inline std::vector<std::string> small_vocab() { return {"field", "and", "blue", "sky", "large", "fields", "house"}; }

// Two levels, width 8: fast enough for exhaustive checks.
inline UNetConfig tiny_unet(int64_t resolution = 8, int64_t in_channels = 3) {
    UNetConfig c;
    c.in_channels = in_channels;
    c.base_width = 8;
    c.channel_mults = {1, 2};
    c.groups = 4;
    c.text_dim = 8;
    c.context_len = 4;
    c.resolution = resolution;
    return c;
}

inline ModelConfig tiny_model(int64_t resolution = 16, int64_t frames = 4) {
    ModelConfig m;
    m.unet = tiny_unet(resolution);
    m.codec = "identity";
    m.frames = frames;
    m.seed = 11;
    return m;
}

inline Tensor random_tensor(Shape shape, uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
    Rng rng(seed);
    return rng.uniform_tensor(std::move(shape), lo, hi);
}

inline VideoClip random_clip(int64_t f, int64_t h, int64_t w, uint64_t seed) {
    VideoClip clip(random_tensor({f, h, w, 3}, seed, 0.0f, 1.0f));
    clip.meta.caption = "field and blue sky";
    return clip;
}

// Perturb every parameter so zero-initialized projections become active.
inline void randomize_parameters(const nn::ParamSet& ps, uint64_t seed, float scale = 0.2f) {
    Rng rng(seed);
    for (const auto& [name, v] : ps.items()) {
        Var p = v;
        for (float& x : p.mutable_value().storage()) x += scale * rng.uniform(-1.0f, 1.0f);
    }
}

}  // namespace mcam::testing
