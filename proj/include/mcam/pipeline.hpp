#pragma once

// Storyboard to video: per-scene sampling with the scene's camera motion
// attached and the previous scene's last frame as the condition image.

#include <filesystem>
#include <optional>
#include <string>

#include "mcam/ada_controlnet.hpp"
#include "mcam/director.hpp"
#include "mcam/training.hpp"
#include "mcam/video.hpp"

namespace mcam {

struct GenerationConfig {
    int64_t frames = 16;
    int64_t resolution = 48;  // pixels; must match the model
    int64_t steps = 25;
    double guidance = 1.0;
    double lambda = kDefaultBlendLambda;  // 0 disables first-frame blending
    int64_t blend_min_t = 0;
    int64_t blend_max_t = 1000;
    std::optional<PixelNormMode> pixel_norm = PixelNormMode::PerFrame;  // nullopt disables
    uint64_t seed = 0;
    std::filesystem::path model_dir = "models";
    std::filesystem::path base_checkpoint, pool_checkpoint, control_checkpoint;  // override model_dir/<stage>
    bool use_llm = true;
    DirectorConfig director;

    void validate() const;
    // The resolution must equal the model's pixel resolution.
    void check_model(const ModelBundle& bundle) const;
    ModelPaths model_paths() const;

    // Flat "key = value" lines; '#' starts a comment. Throws ParameterError on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    static GenerationConfig parse(const std::string& text);
    static GenerationConfig load(const std::filesystem::path& path);
    std::string to_text() const;
};

// Seed of scene `index`; independent of how many scenes follow.
uint64_t scene_seed(uint64_t master_seed, int64_t scene_index);

// Rounds to the 8-bit grid the video is written with.
Tensor quantize_image(const Tensor& image);

// One clip of scene.clip_length frames. With a condition image the control branch,
// first-frame blending and pixel normalization against the condition are applied.
VideoClip generate_scene(const SceneSpec& scene, const std::optional<Tensor>& condition, const GenerationConfig& cfg,
                         const ModelBundle& bundle);

// Scenes in order, each conditioned on the previous scene's last frame (`first_condition` for scene 1).
VideoClip generate_video(const StoryBoard& board, const GenerationConfig& cfg, const ModelBundle& bundle,
                         const std::optional<Tensor>& first_condition = std::nullopt);

// <dir>/frame_00000.ppm ... plus <dir>/manifest.json; condition images as cond_<scene>.ppm.
void write_video(const VideoClip& clip, const std::filesystem::path& dir);
VideoClip read_video(const std::filesystem::path& dir);

inline constexpr const char* kVideoFormat = "mcam-video/1";

}  // namespace mcam
