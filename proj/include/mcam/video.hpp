#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mcam/tensor.hpp"

namespace mcam {

// Per-scene bookkeeping carried by generated multi-scene videos.
struct SceneSegment {
    int64_t index = 1;
    std::string description;
    std::string action;
    int64_t start_frame = 0;
    int64_t length = 0;
    uint64_t seed = 0;
    std::optional<Tensor> condition_image;  // [H, W, 3]
};

struct ClipMetadata {
    std::string caption;
    std::string motion;
    uint64_t seed = 0;
    int64_t scene_index = 0;
};

// Decoded pixel video: frames [f, H, W, 3] in [0, 1].
struct VideoClip {
    Tensor frames;
    ClipMetadata meta;
    std::vector<SceneSegment> scenes;

    VideoClip() = default;
    VideoClip(int64_t f, int64_t h, int64_t w) : frames(Shape{f, h, w, 3}) {}
    explicit VideoClip(Tensor frames_) : frames(std::move(frames_)) {}

    int64_t num_frames() const { return frames.empty() ? 0 : frames.dim(0); }
    int64_t height() const { return frames.dim(1); }
    int64_t width() const { return frames.dim(2); }
    int64_t frame_size() const { return height() * width() * 3; }

    Tensor frame(int64_t i) const;
    void set_frame(int64_t i, const Tensor& image);
    const float* frame_data(int64_t i) const { return frames.data() + i * frame_size(); }
    float* frame_data(int64_t i) { return frames.data() + i * frame_size(); }
    // Single channel plane of frame i as [H, W] (0 = R).
    Tensor channel_plane(int64_t i, int64_t ch) const;
    // Luma plane (Rec. 601 weights) of frame i as [H, W].
    Tensor luma(int64_t i) const;
    void validate() const;
};

// Concatenate clips along the frame axis; sizes must agree.
VideoClip concat_clips(const std::vector<VideoClip>& clips);

}  // namespace mcam
