#pragma once

// The denoising network: a small spatial U-Net with cross-attention on text,
// self-attention at the lowest resolution, and a temporal self-attention layer
// after every spatial block. Activations are laid out frame-major as
// [batch * frames, channels, height, width]; public entry points take the
// [batch, channels, frames, height, width] latent layout.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcam/nn.hpp"

namespace mcam {

using ag::Var;

struct TextEmbedding {
    Tensor tokens;  // [context_len, dim]
    std::string provenance;
};

// Trainable lookup over a closed vocabulary. Rows 0..2 are PAD, UNK and NULL
// (the unconditional embedding for guidance); vocabulary words follow.
class TextEmbedder {
public:
    static constexpr int64_t kPad = 0, kUnk = 1, kNull = 2;

    TextEmbedder() = default;
    TextEmbedder(std::vector<std::string> vocabulary, int64_t dim, int64_t context_len, Rng& rng);

    std::vector<std::string> tokenize(std::string_view prompt) const;
    // Padded/truncated to context_len. Throws InputError on a blank prompt.
    std::vector<int64_t> token_ids(std::string_view prompt) const;
    Var embed_var(std::string_view prompt) const;
    Var null_var() const;
    TextEmbedding embed(std::string_view prompt) const;
    TextEmbedding null_embedding() const;

    int64_t dim() const { return dim_; }
    int64_t context_len() const { return context_len_; }
    const std::vector<std::string>& vocabulary() const { return vocabulary_; }
    void collect(const std::string& prefix, nn::ParamSet& out) const;

private:
    std::vector<std::string> vocabulary_;
    std::map<std::string, int64_t> rows_;
    int64_t dim_ = 0, context_len_ = 0;
    Var table_;
};

TextEmbedding embed_text(const TextEmbedder& embedder, std::string_view prompt);

// One low-rank term s * A * B^T (or a dense delta when `dense` is set).
struct LoraTerm {
    Var a;  // [out, r]
    Var b;  // [in, r]
    float scale = 1.0f;
    Var dense;  // [out, in]
};

// Per-projection low-rank weight overlays keyed by projection id
// ("enc.0.temporal.q"). Never mutates the base weights.
struct MotionOverlay {
    std::map<std::string, std::vector<LoraTerm>> terms;
    bool empty() const { return terms.empty(); }
};

// Materialized delta for one projection: sum of its terms in order.
Var overlay_delta(const std::vector<LoraTerm>& terms);

struct TemporalLayer {
    std::string id;
    int64_t channels = 0, heads = 1;
    nn::LayerNorm norm;
    nn::Linear q, k, v, out;

    TemporalLayer() = default;
    TemporalLayer(Rng& rng, std::string id, int64_t channels, int64_t heads);
    // x [b*frames, C, H, W]. Attention runs along frames at every spatial location.
    Var operator()(const Var& x, int64_t frames, const MotionOverlay* overlay = nullptr) const;
    // Names of the four projections, in q, k, v, out order.
    std::vector<std::string> projection_ids() const;
    const nn::Linear& projection(const std::string& projection_id) const;
    void collect(const std::string& prefix, nn::ParamSet& out) const;
};

Var temporal_attention(const TemporalLayer& layer, const Var& x, int64_t frames, const MotionOverlay* overlay = nullptr);

struct ResBlock {
    nn::GroupNorm norm1, norm2;
    nn::Conv2d conv1, conv2;
    nn::Linear time_proj;
    std::optional<nn::Conv2d> shortcut;

    ResBlock() = default;
    ResBlock(Rng& rng, int64_t in, int64_t out, int64_t temb_dim, int64_t groups);
    Var operator()(const Var& x, const Var& temb_act) const;
    void collect(const std::string& prefix, nn::ParamSet& out) const;
};

struct SelfAttention {
    nn::GroupNorm norm;
    nn::Linear q, k, v, out;
    int64_t heads = 1;

    SelfAttention() = default;
    SelfAttention(Rng& rng, int64_t channels, int64_t heads, int64_t groups);
    Var operator()(const Var& x) const;
    void collect(const std::string& prefix, nn::ParamSet& out) const;
};

struct CrossAttention {
    nn::GroupNorm norm;
    nn::Linear q, k, v, out;
    int64_t heads = 1;

    CrossAttention() = default;
    CrossAttention(Rng& rng, int64_t channels, int64_t context_dim, int64_t heads, int64_t groups);
    // context [N, L, D] with N matching x's leading axis.
    Var operator()(const Var& x, const Var& context) const;
    void collect(const std::string& prefix, nn::ParamSet& out) const;
};

// Resnet block, optional attention, then the temporal layer.
struct SpatialBlock {
    ResBlock res;
    std::optional<SelfAttention> self_attn;
    std::optional<CrossAttention> cross_attn;
    TemporalLayer temporal;

    Var operator()(const Var& x, const Var& temb_act, const Var& context, int64_t frames,
                   const MotionOverlay* overlay) const;
    void collect(const std::string& prefix, nn::ParamSet& out) const;
};

struct UNetConfig {
    int64_t in_channels = 3;
    int64_t base_width = 64;
    std::vector<int64_t> channel_mults{1, 2, 4};
    int64_t groups = 8;
    int64_t attn_heads = 1;
    int64_t temporal_heads = 1;
    int64_t text_dim = 64;
    int64_t context_len = 8;
    int64_t max_timestep = 1000;
    int64_t resolution = 48;

    int64_t levels() const { return static_cast<int64_t>(channel_mults.size()); }
    int64_t channels(int64_t level) const { return base_width * channel_mults.at(static_cast<size_t>(level)); }
    int64_t temb_dim() const { return base_width * 4; }
    void validate() const;
};

void to_json(nlohmann::json& j, const UNetConfig& c);
void from_json(const nlohmann::json& j, UNetConfig& c);

struct TimeEmbedding {
    nn::Linear lin1, lin2;
    int64_t base_dim = 0;

    TimeEmbedding() = default;
    TimeEmbedding(Rng& rng, int64_t base_dim, int64_t temb_dim);
    // One row per timestep; returns silu(embedding) ready for the resnet projections.
    Var operator()(std::span<const int64_t> timesteps) const;
    void collect(const std::string& prefix, nn::ParamSet& out) const;
};

// conv_in followed by one SpatialBlock per level with stride-2 downsampling between.
struct EncoderStack {
    nn::Conv2d conv_in;
    std::vector<SpatialBlock> blocks;
    std::vector<nn::Conv2d> downsample;

    EncoderStack() = default;
    EncoderStack(Rng& rng, const UNetConfig& cfg, const std::string& id_prefix, bool with_cross_attn);
    // Returns the per-level block outputs (skips); the last entry is the bottom feature map.
    std::vector<Var> operator()(const Var& x, const Var& temb_act, const Var& context, int64_t frames,
                                const MotionOverlay* overlay) const;
    void collect(const std::string& prefix, nn::ParamSet& out) const;
};

// Residuals added to the decoder skip connections, one per level, each [batch, C_l, H_l, W_l]
// (broadcast over frames).
struct ControlResiduals {
    std::vector<Var> levels;
};

class DenoiserNet {
public:
    DenoiserNet(const UNetConfig& config, std::vector<std::string> vocabulary, uint64_t seed);

    const UNetConfig& config() const { return config_; }
    const TextEmbedder& text_embedder() const { return text_; }

    // z [b, c, f, h, w]; timesteps one per batch entry; text [b, L, D].
    Var forward(const Var& z, std::span<const int64_t> timesteps, const Var& text,
                const ControlResiduals* control = nullptr, const MotionOverlay* overlay = nullptr) const;

    nn::ParamSet parameters() const;
    std::vector<const TemporalLayer*> temporal_layers() const;
    const EncoderStack& encoder() const { return encoder_; }
    const TimeEmbedding& time_embedding() const { return time_; }
    // Shape of the level-l skip for a batch of b clips (per frame, without the frame axis).
    Shape skip_shape(int64_t level, int64_t batch) const;

private:
    UNetConfig config_;
    TextEmbedder text_;
    TimeEmbedding time_;
    EncoderStack encoder_;
    SpatialBlock mid_;
    std::vector<SpatialBlock> decoder_;
    std::vector<nn::Conv2d> upsample_;
    nn::GroupNorm out_norm_;
    nn::Conv2d out_conv_;
};

// Predicted noise for a latent; plain tensors in and out, no graph recorded.
Tensor denoise(const DenoiserNet& net, const Tensor& z_t, int64_t t, const TextEmbedding& text,
               const ControlResiduals* control = nullptr, const MotionOverlay* overlay = nullptr);

// [b, c, f, h, w] <-> [b*f, c, h, w]
Var latent_to_frames(const Var& z);
Var frames_to_latent(const Var& x, int64_t batch, int64_t frames);

// Stack per-clip text embeddings [L, D] into [b, L, D].
Var stack_text(const std::vector<Var>& rows);

}  // namespace mcam
