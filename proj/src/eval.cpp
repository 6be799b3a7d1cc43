#include "mcam/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "mcam/ada_controlnet.hpp"
#include "mcam/errors.hpp"
#include "mcam/motion_sim.hpp"

namespace mcam {

namespace {

VideoClip frame_range(const VideoClip& clip, int64_t start, int64_t length) {
    VideoClip out(length, clip.height(), clip.width());
    std::copy_n(clip.frame_data(start), length * clip.frame_size(), out.frame_data(0));
    return out;
}

std::string lowercase_words(const std::string& text) {
    std::string out = " ";
    for (char c : text) out += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : ' ';
    return out + " ";
}

}  // namespace

double motion_smoothness(const VideoClip& clip) {
    const int64_t f = clip.num_frames();
    if (f < 3) throw InputError("motion smoothness needs at least 3 frames, got " + std::to_string(f));
    const int64_t n = clip.frame_size();
    double acc = 0.0;
    for (int64_t t = 1; t + 1 < f; ++t) {
        const float *a = clip.frame_data(t - 1), *b = clip.frame_data(t), *c = clip.frame_data(t + 1);
        for (int64_t i = 0; i < n; ++i) acc += std::abs(static_cast<double>(c[i]) - 2.0 * b[i] + a[i]);
    }
    const double mean = acc / (static_cast<double>(n) * static_cast<double>(f - 2));
    return std::clamp(1.0 - mean / 2.0, 0.0, 1.0);
}

double dynamic_degree(const VideoClip& clip) {
    if (clip.num_frames() < 2) throw InputError("dynamic degree needs at least 2 frames");
    return mean_flow_magnitude(estimate_flow(clip));
}

PaletteEmbedder::PaletteEmbedder() {
    for (const auto* list : {&ground_concepts(), &sky_concepts(), &color_concepts()})
        for (const auto& c : *list) {
            phrases_.push_back(c.phrase);
            colors_.push_back(c.rgb);
        }
}

std::vector<double> PaletteEmbedder::embed_text(const std::string& text) const {
    const std::string words = lowercase_words(text);
    std::vector<double> v(phrases_.size(), 0.0);
    for (size_t k = 0; k < phrases_.size(); ++k)
        if (words.find(" " + phrases_[k] + " ") != std::string::npos) v[k] = 1.0;
    return v;
}

std::vector<double> PaletteEmbedder::embed_image(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("palette embedder expects an [H, W, 3] image");
    std::vector<double> v(phrases_.size(), 0.0);
    const int64_t pixels = image.dim(0) * image.dim(1);
    for (int64_t p = 0; p < pixels; ++p) {
        const float* px = image.data() + p * 3;
        size_t best = 0;
        float best_d = std::numeric_limits<float>::infinity();
        for (size_t k = 0; k < colors_.size(); ++k) {
            float d = 0;
            for (int c = 0; c < 3; ++c) d += (px[c] - colors_[k][c]) * (px[c] - colors_[k][c]);
            if (d < best_d) best_d = d, best = k;
        }
        v[best] += 1.0 / static_cast<double>(pixels);
    }
    return v;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionError("embedding sizes differ");
    double ab = 0, aa = 0, bb = 0;
    for (size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
    if (aa == 0 || bb == 0) return 0.0;
    return ab / std::sqrt(aa * bb);
}

std::optional<double> text_alignment(const VideoClip& clip, const std::string& text, const JointEmbedder* embedder) {
    if (!embedder || clip.num_frames() == 0) return std::nullopt;
    const std::vector<double> te = embedder->embed_text(text);
    double acc = 0;
    for (int64_t i = 0; i < clip.num_frames(); ++i) acc += cosine_similarity(embedder->embed_image(clip.frame(i)), te);
    return acc / static_cast<double>(clip.num_frames());
}

std::optional<double> color_consistency(const VideoClip& video) {
    if (video.scenes.size() < 2) return std::nullopt;
    double worst = 0;
    for (size_t k = 0; k + 1 < video.scenes.size(); ++k) {
        const auto& next = video.scenes[k + 1];
        if (next.start_frame < 1 || next.start_frame >= video.num_frames())
            throw IntegrityError("scene " + std::to_string(next.index) + " starts outside the video");
        const ChannelStats a = channel_stats(video.frame(next.start_frame - 1));
        const ChannelStats b = channel_stats(video.frame(next.start_frame));
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(a.mean[c] - b.mean[c]));
    }
    return worst;
}

MetricsReport evaluate_video(const VideoClip& video, const JointEmbedder* embedder, const std::string& instruction) {
    video.validate();
    MetricsReport r;
    r.embedder = embedder ? embedder->name() : "";
    r.notices = {"imaging quality is not reported",
                 "desk-scale proxies; values are comparable only within one metric version"};
    if (!embedder) r.notices.push_back("no embedder: text alignment absent");

    std::vector<SceneSegment> segments = video.scenes;
    if (segments.empty()) segments.push_back({1, video.meta.caption, video.meta.motion, 0, video.num_frames(), 0, {}});
    double ms_acc = 0, ms_frames = 0, dd_acc = 0, dd_frames = 0;
    for (const SceneSegment& s : segments) {
        const VideoClip part = frame_range(video, s.start_frame, s.length);
        SceneMetrics m;
        m.index = s.index;
        m.frames = s.length;
        if (s.length >= 3) {
            m.motion_smoothness = motion_smoothness(part);
            ms_acc += *m.motion_smoothness * s.length;
            ms_frames += s.length;
        }
        if (s.length >= 2) {
            m.dynamic_degree = dynamic_degree(part);
            dd_acc += m.dynamic_degree * s.length;
            dd_frames += s.length;
        }
        if (!s.description.empty()) m.text_alignment = text_alignment(part, s.description, embedder);
        r.scenes.push_back(m);
    }
    r.motion_smoothness = ms_frames > 0 ? ms_acc / ms_frames : motion_smoothness(video);
    r.dynamic_degree = dd_frames > 0 ? dd_acc / dd_frames : dynamic_degree(video);
    const std::string text = instruction.empty() ? video.meta.caption : instruction;
    if (!text.empty()) r.text_alignment = text_alignment(video, text, embedder);
    r.color_consistency = color_consistency(video);
    if (!r.color_consistency) r.notices.push_back("single scene: color consistency absent");
    return r;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<double> json_optional(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const MetricsReport& r) {
    nlohmann::json scenes = nlohmann::json::array();
    for (const auto& s : r.scenes)
        scenes.push_back({{"index", s.index},
                          {"frames", s.frames},
                          {"motion_smoothness", optional_json(s.motion_smoothness)},
                          {"dynamic_degree", s.dynamic_degree},
                          {"text_alignment", optional_json(s.text_alignment)}});
    j = {{"version", r.version},
         {"embedder", r.embedder},
         {"motion_smoothness", r.motion_smoothness},
         {"dynamic_degree", r.dynamic_degree},
         {"text_alignment", optional_json(r.text_alignment)},
         {"color_consistency", optional_json(r.color_consistency)},
         {"scenes", scenes},
         {"notices", r.notices}};
}

void from_json(const nlohmann::json& j, MetricsReport& r) {
    r.version = j.at("version").get<std::string>();
    r.embedder = j.value("embedder", "");
    r.motion_smoothness = j.at("motion_smoothness").get<double>();
    r.dynamic_degree = j.at("dynamic_degree").get<double>();
    r.text_alignment = json_optional(j, "text_alignment");
    r.color_consistency = json_optional(j, "color_consistency");
    r.scenes.clear();
    for (const auto& js : j.at("scenes")) {
        SceneMetrics s;
        s.index = js.at("index").get<int64_t>();
        s.frames = js.value("frames", int64_t{0});
        s.motion_smoothness = json_optional(js, "motion_smoothness");
        s.dynamic_degree = js.at("dynamic_degree").get<double>();
        s.text_alignment = json_optional(js, "text_alignment");
        r.scenes.push_back(s);
    }
    r.notices = j.value("notices", std::vector<std::string>{});
}

}  // namespace mcam
