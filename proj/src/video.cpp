#include "mcam/video.hpp"

#include <algorithm>
#include <cmath>

#include "mcam/errors.hpp"

namespace mcam {

Tensor VideoClip::frame(int64_t i) const {
    if (i < 0 || i >= num_frames()) throw ParameterError("frame index out of range");
    Tensor out(Shape{height(), width(), 3});
    std::copy_n(frame_data(i), frame_size(), out.data());
    return out;
}

void VideoClip::set_frame(int64_t i, const Tensor& image) {
    if (image.shape() != Shape{height(), width(), 3}) throw DimensionError("set_frame: image shape mismatch");
    std::copy_n(image.data(), frame_size(), frame_data(i));
}

Tensor VideoClip::channel_plane(int64_t i, int64_t ch) const {
    Tensor out(Shape{height(), width()});
    const float* src = frame_data(i);
    for (int64_t p = 0; p < height() * width(); ++p) out[p] = src[p * 3 + ch];
    return out;
}

Tensor VideoClip::luma(int64_t i) const {
    Tensor out(Shape{height(), width()});
    const float* src = frame_data(i);
    for (int64_t p = 0; p < height() * width(); ++p)
        out[p] = 0.299f * src[p * 3] + 0.587f * src[p * 3 + 1] + 0.114f * src[p * 3 + 2];
    return out;
}

void VideoClip::validate() const {
    if (frames.rank() != 4 || frames.dim(3) != 3 || frames.dim(0) < 1)
        throw DimensionError("video clip must be [f >= 1, H, W, 3], got " + shape_str(frames.shape()));
    for (float v : frames.storage())
        if (!(v >= 0.0f && v <= 1.0f)) throw DataError("video clip values must lie in [0, 1]");
}

VideoClip concat_clips(const std::vector<VideoClip>& clips) {
    if (clips.empty()) throw ParameterError("concat_clips: nothing to concatenate");
    int64_t total = 0;
    for (const auto& c : clips) {
        if (c.height() != clips[0].height() || c.width() != clips[0].width())
            throw DimensionError("concat_clips: frame sizes differ");
        total += c.num_frames();
    }
    VideoClip out(total, clips[0].height(), clips[0].width());
    out.meta = clips[0].meta;
    int64_t at = 0;
    for (const auto& c : clips) {
        std::copy_n(c.frames.data(), c.frames.numel(), out.frame_data(at));
        at += c.num_frames();
    }
    return out;
}

}  // namespace mcam
