#pragma once

// Procedural scenes, crop schedules that simulate camera motion, clip
// rendering, a block-matching flow oracle and the motion classifier built on it.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mcam/motion.hpp"
#include "mcam/video.hpp"

namespace mcam {

// ---------------------------------------------------------------- scenes

struct PaletteConcept {
    std::string phrase;  // as it appears in captions
    std::array<float, 3> rgb;
};

const std::vector<PaletteConcept>& ground_concepts();
const std::vector<PaletteConcept>& sky_concepts();
const std::vector<PaletteConcept>& color_concepts();
const std::vector<std::string>& object_nouns();
// Every token the caption grammar can emit, sorted.
std::vector<std::string> caption_vocabulary();

struct SceneObject {
    int color = 0;  // index into color_concepts()
    int noun = 0;   // index into object_nouns()
    double x = 0, y = 0, size = 0;
};

struct SceneStyle {
    int max_objects = 3;
    float texture = 1.0f;  // scales the noise texture layers
};

struct SceneImage {
    Tensor pixels;  // [H, W, 3]
    std::string caption;
    uint64_t seed = 0;
    int ground = 0, sky = 0;
    double horizon = 0.5;  // fraction of height
    std::vector<SceneObject> objects;

    int64_t height() const { return pixels.dim(0); }
    int64_t width() const { return pixels.dim(1); }
};

inline constexpr float kTextureEnergyFloor = 0.005f;

// Mean absolute horizontal + vertical luma gradient.
float texture_energy(const Tensor& image);

SceneImage generate_scene_image(uint64_t seed, int64_t width, int64_t height, int64_t clip_resolution,
                                const SceneStyle& style = {});

// ---------------------------------------------------------------- crop schedules

struct CropWindow {
    double x = 0, y = 0, w = 0, h = 0;  // top-left corner and size, source pixels

    double cx() const { return x + w / 2; }
    double cy() const { return y + h / 2; }
};

struct CropSchedule {
    std::vector<CropWindow> windows;
    MotionPattern motion;
    double strength = 0;
};

struct CropOptions {
    double window_fraction = 0.5;       // reference window side / min(image side)
    std::optional<double> center_x;     // reference window center; default image center
    std::optional<double> center_y;
};

// Largest strength keeping every window of `motion` inside the image.
double max_feasible_strength(const MotionPattern& motion, int64_t f, int64_t image_width, int64_t image_height,
                             const CropOptions& options = {});

// Linear schedules relative to a reference window W0 (side s0, center c0), p = i / (f - 1):
//   ZoomIn   side = s0 (1 - k p)        ZoomOut  side = s0 (1 - k (1 - p))
//   PanLeft  center x = c0 - k s0 p     PanRight center x = c0 + k s0 p
//   TiltUp   center y = c0 - k s0 p     TiltDown center y = c0 + k s0 p
// with k = strength * weight per basic entry. Composites apply every entry at once.
CropSchedule make_crop_schedule(const MotionPattern& motion, int64_t f, int64_t image_width, int64_t image_height,
                                double strength, const CropOptions& options = {});
// Same with one strength per motion entry (weights ignored).
CropSchedule make_crop_schedule(const MotionPattern& motion, int64_t f, int64_t image_width, int64_t image_height,
                                const std::vector<double>& strengths, const CropOptions& options = {});

// Bilinear resample of each window to out_resolution x out_resolution.
VideoClip render_clip(const SceneImage& image, const CropSchedule& schedule, int64_t out_resolution);
VideoClip render_clip(const SceneImage& image, const CropSchedule& schedule, int64_t out_width, int64_t out_height);

// ---------------------------------------------------------------- flow

struct FlowField {
    int64_t pairs = 0, rows = 0, cols = 0;
    int64_t block = 0, search = 0;
    std::vector<double> cell_x, cell_y;  // cell centers, pixels
    std::vector<float> dx, dy;            // [pairs][rows][cols]
    std::vector<uint8_t> valid;           // textured cells: [pairs][rows][cols]
    int64_t frame_width = 0, frame_height = 0;

    size_t index(int64_t p, int64_t r, int64_t c) const { return static_cast<size_t>((p * rows + r) * cols + c); }
    bool all_zero() const;
};

inline constexpr float kBlockTextureFloor = 0.01f;

// Exhaustive SAD block matching on luma, frame t -> t+1. Cells tile the frame at
// stride `block` inside a margin of `search` pixels so the full search range stays in bounds.
FlowField estimate_flow(const VideoClip& clip, int64_t block = 8, int64_t search = 4);

// Mean discrete divergence (central differences over valid neighbors), per pixel.
double mean_divergence(const FlowField& flow);
// Mean flow magnitude over valid cells, pixels per frame pair.
double mean_flow_magnitude(const FlowField& flow);

// Least-squares fit of flow = t + k (p - center) over valid cells of all pairs.
struct MotionFit {
    double tx = 0, ty = 0, k = 0;
    double r2 = 0;
    int64_t samples = 0;
};
MotionFit fit_motion(const FlowField& flow);

struct MotionThresholds {
    double translation = 0.5;  // px per frame pair
    double expansion = 0.5;    // px per frame pair at radius width / 4
};

struct MotionVerdict {
    MotionPattern motion;  // Static when below both thresholds
    double confidence = 0;
    MotionFit fit;
};

MotionVerdict classify_motion(const FlowField& flow, const MotionThresholds& thresholds = {});

// ---------------------------------------------------------------- datasets

struct DatasetOptions {
    int64_t n_per_motion = 50;
    int64_t n_static = 0;
    int64_t frames = 8;
    int64_t resolution = 48;
    int64_t scene_size = 128;
    double pan_strength = 0.45;
    double zoom_strength = 0.6;
    double window_fraction = 0.5;
    int64_t max_retries = 20;
    uint64_t seed = 0;
    std::vector<BasicMotion> motions{kBasicMotions.begin(), kBasicMotions.end()};
};

struct LabeledClip {
    VideoClip clip;
    MotionPattern motion;
    uint64_t seed = 0;
    int64_t retries = 0;
};

struct ClipDataset {
    std::vector<LabeledClip> clips;
    int64_t frames = 0, resolution = 0;
    uint64_t seed = 0;
};

double default_strength(BasicMotion m, const DatasetOptions& options);

// Renders one clip for (motion, seed); returns the clip unvalidated.
LabeledClip simulate_clip(const MotionPattern& motion, uint64_t seed, const DatasetOptions& options);

// n_per_motion clips per listed motion (plus n_static still clips), each verified by
// classify_motion and regenerated with a fresh seed on mismatch.
ClipDataset build_dataset(const DatasetOptions& options);

void save_dataset(const ClipDataset& dataset, const std::filesystem::path& dir);
ClipDataset load_dataset(const std::filesystem::path& dir);

}  // namespace mcam
