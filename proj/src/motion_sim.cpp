#include "mcam/motion_sim.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "mcam/errors.hpp"
#include "mcam/image_io.hpp"
#include "mcam/kernels.hpp"
#include "mcam/rng.hpp"
#include "mcam/tensor_io.hpp"

namespace mcam {

// ---------------------------------------------------------------- scenes

const std::vector<PaletteConcept>& ground_concepts() {
    static const std::vector<PaletteConcept> v{
        {"field", {0.36f, 0.62f, 0.22f}}, {"desert", {0.86f, 0.70f, 0.44f}}, {"sea", {0.10f, 0.32f, 0.62f}},
        {"snow", {0.90f, 0.92f, 0.95f}},  {"forest", {0.10f, 0.32f, 0.14f}}, {"hills", {0.50f, 0.42f, 0.32f}},
    };
    return v;
}

const std::vector<PaletteConcept>& sky_concepts() {
    static const std::vector<PaletteConcept> v{
        {"blue sky", {0.40f, 0.64f, 0.95f}},
        {"sunset sky", {0.96f, 0.56f, 0.30f}},
        {"gray sky", {0.62f, 0.62f, 0.66f}},
        {"night sky", {0.06f, 0.07f, 0.22f}},
    };
    return v;
}

const std::vector<PaletteConcept>& color_concepts() {
    static const std::vector<PaletteConcept> v{
        {"red", {0.86f, 0.14f, 0.10f}},   {"yellow", {0.96f, 0.86f, 0.12f}}, {"white", {0.97f, 0.97f, 0.97f}},
        {"black", {0.07f, 0.07f, 0.08f}}, {"purple", {0.55f, 0.22f, 0.72f}}, {"orange", {0.98f, 0.50f, 0.05f}},
    };
    return v;
}

const std::vector<std::string>& object_nouns() {
    static const std::vector<std::string> v{"house", "tree", "boat", "tower", "rock"};
    return v;
}

std::vector<std::string> caption_vocabulary() {
    std::set<std::string> words{"and"};
    auto add_phrase = [&](const std::string& phrase) {
        std::istringstream is(phrase);
        for (std::string w; is >> w;) words.insert(w);
    };
    for (const auto& c : ground_concepts()) add_phrase(c.phrase);
    for (const auto& c : sky_concepts()) add_phrase(c.phrase);
    for (const auto& c : color_concepts()) add_phrase(c.phrase);
    for (const auto& n : object_nouns()) add_phrase(n);
    return {words.begin(), words.end()};
}

namespace {

// Smooth value noise in [-1, 1] with lattice spacing `cell`.
class ValueNoise {
public:
    ValueNoise(Rng& rng, int64_t width, int64_t height, double cell)
        : cell_(cell), nx_(static_cast<int64_t>(width / cell) + 2), ny_(static_cast<int64_t>(height / cell) + 2) {
        lattice_.resize(static_cast<size_t>(nx_ * ny_));
        for (auto& v : lattice_) v = rng.uniform(-1.0f, 1.0f);
    }

    float operator()(double x, double y) const {
        const double gx = x / cell_, gy = y / cell_;
        const auto x0 = static_cast<int64_t>(gx), y0 = static_cast<int64_t>(gy);
        const double fx = smooth(gx - x0), fy = smooth(gy - y0);
        const auto at = [&](int64_t i, int64_t j) { return lattice_[static_cast<size_t>(j * nx_ + i)]; };
        const double top = at(x0, y0) * (1 - fx) + at(x0 + 1, y0) * fx;
        const double bot = at(x0, y0 + 1) * (1 - fx) + at(x0 + 1, y0 + 1) * fx;
        return static_cast<float>(top * (1 - fy) + bot * fy);
    }

private:
    static double smooth(double t) { return t * t * (3 - 2 * t); }
    double cell_;
    int64_t nx_, ny_;
    std::vector<float> lattice_;
};

bool inside_object(const SceneObject& o, double x, double y) {
    const double s = o.size, dx = x - o.x, dy = y - o.y;  // (x, y) anchor: bottom center
    switch (o.noun) {
        case 0: {  // house: body plus triangular roof
            if (std::abs(dx) <= s * 0.5 && dy <= 0 && dy >= -s * 0.6) return true;
            const double roof_y = -s * 0.6 - dy;  // height above the body
            return roof_y >= 0 && roof_y <= s * 0.45 && std::abs(dx) <= s * 0.6 * (1 - roof_y / (s * 0.45));
        }
        case 1: {  // tree: trunk plus round crown
            if (std::abs(dx) <= s * 0.08 && dy <= 0 && dy >= -s * 0.4) return true;
            const double cy = -s * 0.7;
            return dx * dx + (dy - cy) * (dy - cy) <= (s * 0.35) * (s * 0.35);
        }
        case 2: {  // boat: trapezoid hull plus mast
            if (dy <= 0 && dy >= -s * 0.25 && std::abs(dx) <= s * 0.5 - (-dy) * -0.8) return true;
            return std::abs(dx) <= s * 0.04 && dy < -s * 0.25 && dy >= -s * 0.8;
        }
        case 3:  // tower: tall narrow block
            return std::abs(dx) <= s * 0.15 && dy <= 0 && dy >= -s * 1.2;
        default: {  // rock: flattened ellipse
            const double ry = s * 0.3, rx = s * 0.5;
            const double ey = dy + ry;
            return (dx * dx) / (rx * rx) + (ey * ey) / (ry * ry) <= 1.0;
        }
    }
}

}  // namespace

float texture_energy(const Tensor& image) {
    const int64_t H = image.dim(0), W = image.dim(1);
    if (H < 2 || W < 2) return 0.0f;
    auto luma = [&](int64_t y, int64_t x) {
        const float* p = image.data() + (y * W + x) * 3;
        return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    };
    double total = 0;
    for (int64_t y = 0; y + 1 < H; ++y)
        for (int64_t x = 0; x + 1 < W; ++x)
            total += std::abs(luma(y, x + 1) - luma(y, x)) + std::abs(luma(y + 1, x) - luma(y, x));
    return static_cast<float>(total / static_cast<double>((H - 1) * (W - 1)));
}

SceneImage generate_scene_image(uint64_t seed, int64_t width, int64_t height, int64_t clip_resolution,
                                const SceneStyle& style) {
    if (width < 2 * clip_resolution || height < 2 * clip_resolution)
        throw ParameterError("scene size " + std::to_string(width) + "x" + std::to_string(height) +
                             " is below twice the clip resolution " + std::to_string(clip_resolution));
    Rng rng(seed);
    SceneImage scene;
    scene.seed = seed;
    scene.ground = static_cast<int>(rng.randint(0, static_cast<int64_t>(ground_concepts().size()) - 1));
    scene.sky = static_cast<int>(rng.randint(0, static_cast<int64_t>(sky_concepts().size()) - 1));
    scene.horizon = rng.uniform(0.30f, 0.55f);
    const int n_objects = static_cast<int>(rng.randint(0, style.max_objects));
    for (int i = 0; i < n_objects; ++i) {
        SceneObject o;
        o.color = static_cast<int>(rng.randint(0, static_cast<int64_t>(color_concepts().size()) - 1));
        o.noun = static_cast<int>(rng.randint(0, static_cast<int64_t>(object_nouns().size()) - 1));
        o.size = rng.uniform(0.12f, 0.24f) * static_cast<double>(std::min(width, height));
        o.x = rng.uniform(0.15f, 0.85f) * static_cast<double>(width);
        o.y = (scene.horizon + rng.uniform(0.08f, 0.40f) * (1.0 - scene.horizon)) * static_cast<double>(height);
        scene.objects.push_back(o);
    }
    const ValueNoise coarse(rng, width, height, 16.0), mid(rng, width, height, 8.0), fine(rng, width, height, 4.0);
    const ValueNoise clouds(rng, width, height, 24.0);

    const auto& sky = sky_concepts()[static_cast<size_t>(scene.sky)].rgb;
    const auto& ground = ground_concepts()[static_cast<size_t>(scene.ground)].rgb;
    const double horizon_px = scene.horizon * static_cast<double>(height);
    const float tex = style.texture;
    scene.pixels = Tensor(Shape{height, width, 3});
    for (int64_t y = 0; y < height; ++y)
        for (int64_t x = 0; x < width; ++x) {
            const double px = static_cast<double>(x), py = static_cast<double>(y);
            const float detail = 0.45f * coarse(px, py) + 0.35f * mid(px, py) + 0.20f * fine(px, py);
            std::array<float, 3> rgb;
            if (py < horizon_px) {
                const float g = static_cast<float>(py / horizon_px);  // 0 at top
                const float cloud = tex * (0.10f * clouds(px, py) + 0.08f * detail);
                for (int c = 0; c < 3; ++c) rgb[c] = sky[c] * (0.80f + 0.30f * g) + cloud;
            } else {
                const float depth = static_cast<float>((py - horizon_px) / (height - horizon_px));
                for (int c = 0; c < 3; ++c) rgb[c] = ground[c] * (0.85f + 0.25f * depth) * (1.0f + tex * 0.35f * detail) + tex * 0.12f * detail;
            }
            for (const auto& o : scene.objects)
                if (inside_object(o, px, py)) {
                    const auto& col = color_concepts()[static_cast<size_t>(o.color)].rgb;
                    for (int c = 0; c < 3; ++c) rgb[c] = col[c] + tex * 0.12f * detail;
                }
            for (int c = 0; c < 3; ++c) scene.pixels[(y * width + x) * 3 + c] = std::clamp(rgb[c], 0.0f, 1.0f);
        }
    if (texture_energy(scene.pixels) < kTextureEnergyFloor)
        throw DataError("scene " + std::to_string(seed) + " is too flat for motion estimation");

    scene.caption = ground_concepts()[static_cast<size_t>(scene.ground)].phrase + " and " +
                    sky_concepts()[static_cast<size_t>(scene.sky)].phrase;
    for (const auto& o : scene.objects)
        scene.caption += ", " + color_concepts()[static_cast<size_t>(o.color)].phrase + " " +
                         object_nouns()[static_cast<size_t>(o.noun)];
    return scene;
}

// ---------------------------------------------------------------- crop schedules

namespace {

std::vector<CropWindow> schedule_windows(const MotionPattern& motion, const std::vector<double>& strengths, int64_t f,
                                         int64_t W, int64_t H, const CropOptions& options) {
    const double s0 = options.window_fraction * static_cast<double>(std::min(W, H));
    const double c0x = options.center_x.value_or(W / 2.0), c0y = options.center_y.value_or(H / 2.0);
    std::vector<CropWindow> out;
    for (int64_t i = 0; i < f; ++i) {
        const double p = static_cast<double>(i) / static_cast<double>(f - 1);
        double side = s0, cx = c0x, cy = c0y;
        for (size_t e = 0; e < motion.entries().size(); ++e) {
            const double k = strengths[e];
            switch (motion.entries()[e].first) {
                case BasicMotion::ZoomIn: side *= 1 - k * p; break;
                case BasicMotion::ZoomOut: side *= 1 - k * (1 - p); break;
                case BasicMotion::PanLeft: cx -= k * s0 * p; break;
                case BasicMotion::PanRight: cx += k * s0 * p; break;
                case BasicMotion::TiltUp: cy -= k * s0 * p; break;
                case BasicMotion::TiltDown: cy += k * s0 * p; break;
            }
        }
        out.push_back({cx - side / 2, cy - side / 2, side, side});
    }
    return out;
}

std::vector<double> weighted(const MotionPattern& motion, double strength) {
    std::vector<double> out;
    for (const auto& e : motion.entries()) out.push_back(strength * e.second);
    return out;
}

bool windows_feasible(const std::vector<CropWindow>& windows, int64_t W, int64_t H) {
    constexpr double tol = 1e-9;
    for (const auto& w : windows)
        if (!(w.w > 1e-6) || w.x < -tol || w.y < -tol || w.x + w.w > W + tol || w.y + w.h > H + tol) return false;
    return true;
}

}  // namespace

double max_feasible_strength(const MotionPattern& motion, int64_t f, int64_t W, int64_t H, const CropOptions& options) {
    if (motion.is_static()) return 0.0;
    auto ok = [&](double s) {
        return windows_feasible(schedule_windows(motion, weighted(motion, s), f, W, H, options), W, H);
    };
    double lo = 0.0, hi = 1.0;
    while (ok(hi) && hi < 1e6) {
        lo = hi;
        hi *= 2;
    }
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (ok(mid) ? lo : hi) = mid;
    }
    return lo;
}

CropSchedule make_crop_schedule(const MotionPattern& motion, int64_t f, int64_t W, int64_t H, double strength,
                                const CropOptions& options) {
    if (strength < 0) throw ParameterError("strength must be >= 0");
    CropSchedule schedule = make_crop_schedule(motion, f, W, H, weighted(motion, strength), options);
    schedule.strength = strength;
    return schedule;
}

CropSchedule make_crop_schedule(const MotionPattern& motion, int64_t f, int64_t W, int64_t H,
                                const std::vector<double>& strengths, const CropOptions& options) {
    if (f < 2) throw ParameterError("crop schedule needs f >= 2");
    if (strengths.size() != motion.entries().size()) throw ParameterError("one strength per motion entry expected");
    for (double s : strengths)
        if (s < 0) throw ParameterError("strength must be >= 0");
    if (!(options.window_fraction > 0 && options.window_fraction <= 1))
        throw ParameterError("window fraction must lie in (0, 1]");
    CropSchedule schedule;
    schedule.motion = motion;
    schedule.strength = strengths.empty() ? 0.0 : *std::max_element(strengths.begin(), strengths.end());
    schedule.windows = schedule_windows(motion, strengths, f, W, H, options);
    if (!windows_feasible(schedule.windows, W, H)) {
        std::ostringstream os;
        os << "strength " << schedule.strength << " moves a window outside the " << W << "x" << H
           << " image; max feasible strength is " << max_feasible_strength(motion, f, W, H, options);
        throw FeasibilityError(os.str());
    }
    return schedule;
}

VideoClip render_clip(const SceneImage& image, const CropSchedule& schedule, int64_t out_resolution) {
    return render_clip(image, schedule, out_resolution, out_resolution);
}

VideoClip render_clip(const SceneImage& image, const CropSchedule& schedule, int64_t out_w, int64_t out_h) {
    const int64_t W = image.width(), H = image.height();
    const int64_t f = static_cast<int64_t>(schedule.windows.size());
    VideoClip clip(f, out_h, out_w);
    const float* src = image.pixels.data();
    for (int64_t i = 0; i < f; ++i) {
        const CropWindow& win = schedule.windows[static_cast<size_t>(i)];
        float* dst = clip.frame_data(i);
        for (int64_t v = 0; v < out_h; ++v) {
            const double sy = std::clamp(win.y + (v + 0.5) * win.h / out_h - 0.5, 0.0, static_cast<double>(H - 1));
            const auto y0 = static_cast<int64_t>(sy);
            const int64_t y1 = std::min(y0 + 1, H - 1);
            const double fy = sy - y0;
            for (int64_t u = 0; u < out_w; ++u) {
                const double sx =
                    std::clamp(win.x + (u + 0.5) * win.w / out_w - 0.5, 0.0, static_cast<double>(W - 1));
                const auto x0 = static_cast<int64_t>(sx);
                const int64_t x1 = std::min(x0 + 1, W - 1);
                const double fx = sx - x0;
                for (int c = 0; c < 3; ++c) {
                    const double a = src[(y0 * W + x0) * 3 + c], b = src[(y0 * W + x1) * 3 + c];
                    const double d = src[(y1 * W + x0) * 3 + c], e = src[(y1 * W + x1) * 3 + c];
                    const double top = fx == 0.0 ? a : a * (1 - fx) + b * fx;
                    const double bot = fx == 0.0 ? d : d * (1 - fx) + e * fx;
                    dst[(v * out_w + u) * 3 + c] = static_cast<float>(fy == 0.0 ? top : top * (1 - fy) + bot * fy);
                }
            }
        }
    }
    clip.meta.caption = image.caption;
    clip.meta.motion = schedule.motion.name();
    clip.meta.seed = image.seed;
    return clip;
}

// ---------------------------------------------------------------- flow

bool FlowField::all_zero() const {
    for (size_t i = 0; i < dx.size(); ++i)
        if (dx[i] != 0.0f || dy[i] != 0.0f) return false;
    return true;
}

FlowField estimate_flow(const VideoClip& clip, int64_t block, int64_t search) {
    const int64_t W = clip.width(), H = clip.height();
    if (clip.num_frames() < 2) throw InputError("flow needs at least two frames");
    if (block < 1 || block > std::min(W, H)) throw ParameterError("block size must lie in [1, frame size]");
    if (search < 0) throw ParameterError("search radius must be >= 0");
    FlowField flow;
    flow.block = block;
    flow.search = search;
    flow.frame_width = W;
    flow.frame_height = H;
    flow.pairs = clip.num_frames() - 1;
    std::vector<int64_t> ox, oy;
    for (int64_t x = search; x + block + search <= W; x += block) ox.push_back(x);
    for (int64_t y = search; y + block + search <= H; y += block) oy.push_back(y);
    if (ox.empty() || oy.empty()) {  // tiny frames: one cell, truncated search
        ox = {0};
        oy = {0};
    }
    flow.cols = static_cast<int64_t>(ox.size());
    flow.rows = static_cast<int64_t>(oy.size());
    for (auto x : ox) flow.cell_x.push_back(static_cast<double>(x) + (block - 1) / 2.0);
    for (auto y : oy) flow.cell_y.push_back(static_cast<double>(y) + (block - 1) / 2.0);
    const size_t per_pair = static_cast<size_t>(flow.rows * flow.cols);
    flow.dx.assign(per_pair * static_cast<size_t>(flow.pairs), 0.0f);
    flow.dy = flow.dx;
    flow.valid.assign(flow.dx.size(), 0);

    std::vector<Tensor> luma;
    for (int64_t i = 0; i < clip.num_frames(); ++i) luma.push_back(clip.luma(i));
    std::vector<int32_t> dx(per_pair), dy(per_pair);
    for (int64_t p = 0; p < flow.pairs; ++p) {
        const Tensor& a = luma[static_cast<size_t>(p)];
        kernels::block_match(a.span(), luma[static_cast<size_t>(p + 1)].span(), W, H, block, search, ox, oy, dx, dy);
        for (int64_t r = 0; r < flow.rows; ++r)
            for (int64_t c = 0; c < flow.cols; ++c) {
                const size_t k = static_cast<size_t>(r * flow.cols + c);
                const size_t at = flow.index(p, r, c);
                flow.dx[at] = static_cast<float>(dx[k]);
                flow.dy[at] = static_cast<float>(dy[k]);
                double s = 0, s2 = 0;
                for (int64_t y = 0; y < block; ++y)
                    for (int64_t x = 0; x < block; ++x) {
                        const double v = a[(oy[r] + y) * W + ox[c] + x];
                        s += v;
                        s2 += v * v;
                    }
                const double n = static_cast<double>(block * block);
                const double var = std::max(0.0, s2 / n - (s / n) * (s / n));
                flow.valid[at] = std::sqrt(var) >= kBlockTextureFloor ? 1 : 0;
            }
    }
    return flow;
}

double mean_divergence(const FlowField& flow) {
    double total = 0;
    int64_t count = 0;
    const double step = static_cast<double>(flow.block);
    for (int64_t p = 0; p < flow.pairs; ++p)
        for (int64_t r = 1; r + 1 < flow.rows; ++r)
            for (int64_t c = 1; c + 1 < flow.cols; ++c) {
                const size_t l = flow.index(p, r, c - 1), rr = flow.index(p, r, c + 1);
                const size_t u = flow.index(p, r - 1, c), d = flow.index(p, r + 1, c);
                if (!flow.valid[l] || !flow.valid[rr] || !flow.valid[u] || !flow.valid[d]) continue;
                total += (flow.dx[rr] - flow.dx[l]) / (2 * step) + (flow.dy[d] - flow.dy[u]) / (2 * step);
                ++count;
            }
    return count ? total / static_cast<double>(count) : 0.0;
}

double mean_flow_magnitude(const FlowField& flow) {
    double total = 0;
    int64_t count = 0;
    for (size_t i = 0; i < flow.dx.size(); ++i)
        if (flow.valid[i]) {
            total += std::hypot(flow.dx[i], flow.dy[i]);
            ++count;
        }
    return count ? total / static_cast<double>(count) : 0.0;
}

MotionFit fit_motion(const FlowField& flow) {
    const double cx = (flow.frame_width - 1) / 2.0, cy = (flow.frame_height - 1) / 2.0;
    double n = 0, su = 0, sv = 0, sx = 0, sy = 0, q = 0, pq = 0;
    for (int64_t p = 0; p < flow.pairs; ++p)
        for (int64_t r = 0; r < flow.rows; ++r)
            for (int64_t c = 0; c < flow.cols; ++c) {
                const size_t at = flow.index(p, r, c);
                if (!flow.valid[at]) continue;
                const double X = flow.cell_x[static_cast<size_t>(c)] - cx, Y = flow.cell_y[static_cast<size_t>(r)] - cy;
                const double u = flow.dx[at], v = flow.dy[at];
                n += 1;
                su += u;
                sv += v;
                sx += X;
                sy += Y;
                q += X * X + Y * Y;
                pq += X * u + Y * v;
            }
    MotionFit fit;
    fit.samples = static_cast<int64_t>(n);
    if (n == 0) return fit;
    const double denom = q - (sx * sx + sy * sy) / n;
    fit.k = denom > 1e-12 ? (pq - (sx * su + sy * sv) / n) / denom : 0.0;
    fit.tx = (su - fit.k * sx) / n;
    fit.ty = (sv - fit.k * sy) / n;
    double ss_res = 0, ss_tot = 0;
    const double mu = su / n, mv = sv / n;
    for (int64_t p = 0; p < flow.pairs; ++p)
        for (int64_t r = 0; r < flow.rows; ++r)
            for (int64_t c = 0; c < flow.cols; ++c) {
                const size_t at = flow.index(p, r, c);
                if (!flow.valid[at]) continue;
                const double X = flow.cell_x[static_cast<size_t>(c)] - cx, Y = flow.cell_y[static_cast<size_t>(r)] - cy;
                const double eu = flow.dx[at] - fit.tx - fit.k * X, ev = flow.dy[at] - fit.ty - fit.k * Y;
                ss_res += eu * eu + ev * ev;
                ss_tot += (flow.dx[at] - mu) * (flow.dx[at] - mu) + (flow.dy[at] - mv) * (flow.dy[at] - mv);
            }
    // Variance around zero motion, so a pure translation with no spread still scores 1.
    const double ss_zero = ss_tot + n * (mu * mu + mv * mv);
    fit.r2 = ss_zero > 0 ? std::clamp(1.0 - ss_res / ss_zero, 0.0, 1.0) : 1.0;
    return fit;
}

MotionVerdict classify_motion(const FlowField& flow, const MotionThresholds& thresholds) {
    MotionVerdict verdict;
    if (flow.pairs < 1) throw InputError("classify_motion needs at least one frame pair");
    if (flow.all_zero()) {
        verdict.confidence = 1.0;
        return verdict;
    }
    verdict.fit = fit_motion(flow);
    const MotionFit& fit = verdict.fit;
    const double trans = std::hypot(fit.tx, fit.ty);
    const double zoom = std::abs(fit.k) * flow.frame_width / 4.0;
    const bool moving = trans >= thresholds.translation;
    const bool zooming = zoom >= thresholds.expansion;
    if (!moving && !zooming) {
        verdict.confidence = std::clamp(1.0 - std::max(trans / thresholds.translation, zoom / thresholds.expansion), 0.0, 1.0);
        return verdict;
    }
    const BasicMotion zoom_motion = fit.k > 0 ? BasicMotion::ZoomIn : BasicMotion::ZoomOut;
    BasicMotion pan_motion;
    double dominance = 1.0;
    if (std::abs(fit.tx) >= std::abs(fit.ty)) {
        pan_motion = fit.tx > 0 ? BasicMotion::PanLeft : BasicMotion::PanRight;
        dominance = std::abs(fit.tx) / (std::abs(fit.tx) + std::abs(fit.ty));
    } else {
        pan_motion = fit.ty > 0 ? BasicMotion::TiltUp : BasicMotion::TiltDown;
        dominance = std::abs(fit.ty) / (std::abs(fit.tx) + std::abs(fit.ty));
    }
    if (moving && zooming) {
        verdict.motion = MotionPattern::composite({{zoom_motion, 1.0f}, {pan_motion, 1.0f}});
        verdict.confidence = fit.r2 * dominance;
    } else if (moving) {
        verdict.motion = pan_motion;
        verdict.confidence = fit.r2 * dominance;
    } else {
        verdict.motion = zoom_motion;
        verdict.confidence = fit.r2;
    }
    return verdict;
}

// ---------------------------------------------------------------- datasets

double default_strength(BasicMotion m, const DatasetOptions& options) {
    return (m == BasicMotion::ZoomIn || m == BasicMotion::ZoomOut) ? options.zoom_strength : options.pan_strength;
}

LabeledClip simulate_clip(const MotionPattern& motion, uint64_t seed, const DatasetOptions& options) {
    const SceneImage scene = generate_scene_image(derive_seed(seed, 1), options.scene_size, options.scene_size,
                                                  options.resolution);
    std::vector<double> strengths;
    for (const auto& [m, w] : motion.entries()) strengths.push_back(w * default_strength(m, options));
    CropOptions crop;
    crop.window_fraction = options.window_fraction;
    const int64_t S = options.scene_size;
    // Place the trajectory uniformly at random among positions that keep it inside the scene.
    const auto centered = make_crop_schedule(motion, options.frames, S, S, strengths, crop);
    double min_x = S, min_y = S, max_x = 0, max_y = 0;
    for (const auto& w : centered.windows) {
        min_x = std::min(min_x, w.x);
        min_y = std::min(min_y, w.y);
        max_x = std::max(max_x, w.x + w.w);
        max_y = std::max(max_y, w.y + w.h);
    }
    Rng rng(derive_seed(seed, 2));
    crop.center_x = S / 2.0 + rng.uniform_double() * (S - (max_x - min_x)) - min_x;
    crop.center_y = S / 2.0 + rng.uniform_double() * (S - (max_y - min_y)) - min_y;
    const auto schedule = make_crop_schedule(motion, options.frames, S, S, strengths, crop);
    LabeledClip out;
    out.clip = render_clip(scene, schedule, options.resolution);
    out.clip.meta.seed = seed;
    out.motion = motion;
    out.seed = seed;
    return out;
}

ClipDataset build_dataset(const DatasetOptions& options) {
    if (options.n_per_motion < 1) throw ParameterError("n_per_motion must be >= 1");
    if (options.frames < 2) throw ParameterError("clips need at least two frames");
    std::vector<MotionPattern> labels;
    for (BasicMotion m : options.motions)
        for (int64_t i = 0; i < options.n_per_motion; ++i) labels.emplace_back(m);
    for (int64_t i = 0; i < options.n_static; ++i) labels.emplace_back();

    ClipDataset dataset;
    dataset.frames = options.frames;
    dataset.resolution = options.resolution;
    dataset.seed = options.seed;
    dataset.clips.resize(labels.size());
    std::vector<std::string> failures(labels.size());
    const auto n = static_cast<int64_t>(labels.size());
#pragma omp parallel for schedule(dynamic)
    for (int64_t i = 0; i < n; ++i) {
        const uint64_t base = derive_seed(options.seed, static_cast<uint64_t>(i));
        bool accepted = false;
        for (int64_t attempt = 0; attempt <= options.max_retries && !accepted; ++attempt) {
            LabeledClip clip = simulate_clip(labels[static_cast<size_t>(i)], derive_seed(base, static_cast<uint64_t>(attempt)), options);
            const MotionVerdict verdict = classify_motion(estimate_flow(clip.clip));
            if (verdict.motion == clip.motion) {
                clip.retries = attempt;
                dataset.clips[static_cast<size_t>(i)] = std::move(clip);
                accepted = true;
            }
        }
        if (!accepted) failures[static_cast<size_t>(i)] = labels[static_cast<size_t>(i)].name();
    }
    for (size_t i = 0; i < failures.size(); ++i)
        if (!failures[i].empty())
            throw GenerationError("clip " + std::to_string(i) + " (" + failures[i] + ") failed self-classification after " +
                                  std::to_string(options.max_retries) + " retries");
    return dataset;
}

namespace {

std::string clip_dir_name(size_t i) {
    std::ostringstream os;
    os << "clip_" << std::setw(4) << std::setfill('0') << i;
    return os.str();
}

std::string frame_file_name(int64_t i) {
    std::ostringstream os;
    os << "frame_" << std::setw(4) << std::setfill('0') << i << ".ppm";
    return os.str();
}

}  // namespace

void save_dataset(const ClipDataset& dataset, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json clips = nlohmann::json::array();
    for (size_t i = 0; i < dataset.clips.size(); ++i) {
        const auto& c = dataset.clips[i];
        const std::string name = clip_dir_name(i);
        fs::create_directories(dir / name);
        for (int64_t k = 0; k < c.clip.num_frames(); ++k) write_ppm(dir / name / frame_file_name(k), c.clip.frame(k));
        clips.push_back({{"dir", name}, {"caption", c.clip.meta.caption}, {"motion", c.motion.name()}, {"seed", c.seed}});
    }
    write_json_file(dir / "manifest.json", {{"format", "mcam-dataset/1"},
                                            {"frames", dataset.frames},
                                            {"resolution", dataset.resolution},
                                            {"seed", dataset.seed},
                                            {"clips", clips}});
}

ClipDataset load_dataset(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir / "manifest.json")) throw IoError("no dataset manifest in " + dir.string());
    const auto manifest = read_json_file(dir / "manifest.json");
    ClipDataset dataset;
    dataset.frames = manifest.at("frames").get<int64_t>();
    dataset.resolution = manifest.at("resolution").get<int64_t>();
    dataset.seed = manifest.at("seed").get<uint64_t>();
    for (const auto& j : manifest.at("clips")) {
        const fs::path clip_dir = dir / j.at("dir").get<std::string>();
        LabeledClip c;
        c.clip = VideoClip(dataset.frames, dataset.resolution, dataset.resolution);
        for (int64_t k = 0; k < dataset.frames; ++k) {
            const fs::path frame = clip_dir / frame_file_name(k);
            if (!fs::exists(frame)) throw IntegrityError("dataset clip " + clip_dir.string() + " is missing " + frame.filename().string());
            c.clip.set_frame(k, read_ppm(frame));
        }
        c.motion = MotionPattern::parse(j.at("motion").get<std::string>());
        c.seed = j.at("seed").get<uint64_t>();
        c.clip.meta.caption = j.at("caption").get<std::string>();
        c.clip.meta.motion = c.motion.name();
        c.clip.meta.seed = c.seed;
        dataset.clips.push_back(std::move(c));
    }
    return dataset;
}

}  // namespace mcam
