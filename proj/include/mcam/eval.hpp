#pragma once

// Desk-scale video metrics: smoothness, dynamic degree, text alignment and
// color consistency across scene boundaries.

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcam/video.hpp"

namespace mcam {

inline constexpr const char* kMetricsVersion =
    "mcam-metrics/1 ms=1-mean|x[t+1]-2x[t]+x[t-1]|/2 dd=block-flow-px-per-pair(8,4) "
    "cc=max-boundary-channel-mean-diff";

// 1 - mean absolute second temporal difference / 2. In [0, 1]; needs >= 3 frames.
double motion_smoothness(const VideoClip& clip);
// Mean block-matching flow magnitude, pixels per frame pair. Needs >= 2 frames.
double dynamic_degree(const VideoClip& clip);

// Text and image embeddings in one space.
class JointEmbedder {
public:
    virtual ~JointEmbedder() = default;
    virtual std::string name() const = 0;
    virtual std::vector<double> embed_text(const std::string& text) const = 0;
    virtual std::vector<double> embed_image(const Tensor& image) const = 0;
};

// One axis per palette concept of the scene simulator. A caption scores the concepts
// it names; an image scores the share of pixels nearest to each concept color.
class PaletteEmbedder final : public JointEmbedder {
public:
    PaletteEmbedder();
    std::string name() const override { return "palette-mock/1"; }
    std::vector<double> embed_text(const std::string& text) const override;
    std::vector<double> embed_image(const Tensor& image) const override;

private:
    std::vector<std::string> phrases_;
    std::vector<std::array<float, 3>> colors_;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Mean over frames of cosine(frame, text). Absent without an embedder.
std::optional<double> text_alignment(const VideoClip& clip, const std::string& text, const JointEmbedder* embedder);

// Largest |channel mean difference| between the last frame of a scene and the first of the next.
// Absent for videos with fewer than two scenes.
std::optional<double> color_consistency(const VideoClip& video);

struct SceneMetrics {
    int64_t index = 0;
    int64_t frames = 0;
    std::optional<double> motion_smoothness;  // scenes of >= 3 frames
    double dynamic_degree = 0;
    std::optional<double> text_alignment;
};

struct MetricsReport {
    std::string version = kMetricsVersion;
    std::string embedder;
    double motion_smoothness = 0, dynamic_degree = 0;
    std::optional<double> text_alignment, color_consistency;
    std::vector<SceneMetrics> scenes;
    std::vector<std::string> notices;
};

// With scene metadata, video-level smoothness and dynamic degree are frame-weighted
// means over scenes, so cuts are not scored as motion. Scene text comes from the
// scene metadata; `instruction` (or the clip caption) scores the whole video.
MetricsReport evaluate_video(const VideoClip& video, const JointEmbedder* embedder,
                             const std::string& instruction = "");

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

}  // namespace mcam
