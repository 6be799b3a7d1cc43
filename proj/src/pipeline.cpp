#include "mcam/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "mcam/errors.hpp"
#include "mcam/image_io.hpp"
#include "mcam/tensor_io.hpp"

namespace mcam {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    return s.substr(a, s.find_last_not_of(" \t\r\n") - a + 1);
}

int64_t to_int(const std::string& key, const std::string& v) {
    size_t used = 0;
    int64_t out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw ParameterError("config key '" + key + "': expected an integer, got '" + v + "'");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    size_t used = 0;
    double out = 0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw ParameterError("config key '" + key + "': expected a number, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "off" || v == "0" || v == "no") return false;
    throw ParameterError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string frame_name(int64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%05lld.ppm", static_cast<long long>(i));
    return buf;
}

std::string condition_name(int64_t scene) { return "cond_" + std::to_string(scene) + ".ppm"; }

}  // namespace

void GenerationConfig::validate() const {
    if (frames < 2) throw ParameterError("frames must be >= 2, got " + std::to_string(frames));
    if (resolution < 1) throw ParameterError("resolution must be positive");
    if (steps < 1) throw ParameterError("steps must be >= 1");
    if (guidance < 0) throw ParameterError("guidance must be >= 0");
    BlendConfig{lambda, blend_min_t, blend_max_t, 0}.validate();
    director.validate();
}

void GenerationConfig::check_model(const ModelBundle& bundle) const {
    const int64_t model_res = bundle.config.pixel_resolution();
    if (resolution != model_res)
        throw ParameterError("resolution " + std::to_string(resolution) + " does not match the model's " +
                             std::to_string(model_res));
}

ModelPaths GenerationConfig::model_paths() const {
    ModelPaths p = ModelPaths::under(model_dir);
    if (!base_checkpoint.empty()) p.base = base_checkpoint;
    if (!pool_checkpoint.empty()) p.pool = pool_checkpoint;
    if (!control_checkpoint.empty()) p.control = control_checkpoint;
    return p;
}

void GenerationConfig::set(const std::string& key, const std::string& value) {
    if (key == "frames") frames = to_int(key, value);
    else if (key == "resolution") resolution = to_int(key, value);
    else if (key == "steps") steps = to_int(key, value);
    else if (key == "guidance") guidance = to_double(key, value);
    else if (key == "lambda") lambda = to_double(key, value);
    else if (key == "blend_min_t") blend_min_t = to_int(key, value);
    else if (key == "blend_max_t") blend_max_t = to_int(key, value);
    else if (key == "pixel_norm") {
        if (value == "off") pixel_norm.reset();
        else pixel_norm = parse_pixel_norm_mode(value);
    } else if (key == "seed") seed = static_cast<uint64_t>(to_int(key, value));
    else if (key == "model_dir") model_dir = value;
    else if (key == "base_checkpoint") base_checkpoint = value;
    else if (key == "pool_checkpoint") pool_checkpoint = value;
    else if (key == "control_checkpoint") control_checkpoint = value;
    else if (key == "use_llm") use_llm = to_bool(key, value);
    else if (key == "director_endpoint") director.endpoint = value;
    else if (key == "director_model") director.model = value;
    else if (key == "director_timeout") director.timeout_s = to_double(key, value);
    else if (key == "director_retries") director.retries = static_cast<int>(to_int(key, value));
    else if (key == "director_token_env") director.token_env = value;
    else throw ParameterError("unknown config key '" + key + "'");
}

GenerationConfig GenerationConfig::parse(const std::string& text) {
    GenerationConfig cfg;
    std::istringstream is(text);
    int line_no = 0;
    for (std::string line; std::getline(is, line);) {
        ++line_no;
        if (const size_t hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw ParameterError("config line " + std::to_string(line_no) + ": expected key = value");
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

GenerationConfig GenerationConfig::load(const fs::path& path) { return parse(read_text_file(path)); }

std::string GenerationConfig::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "frames = " << frames << "\nresolution = " << resolution << "\nsteps = " << steps
       << "\nguidance = " << guidance << "\nlambda = " << lambda << "\nblend_min_t = " << blend_min_t
       << "\nblend_max_t = " << blend_max_t
       << "\npixel_norm = " << (pixel_norm ? pixel_norm_mode_name(*pixel_norm) : "off") << "\nseed = " << seed
       << "\nmodel_dir = " << model_dir.string() << "\n";
    if (!base_checkpoint.empty()) os << "base_checkpoint = " << base_checkpoint.string() << "\n";
    if (!pool_checkpoint.empty()) os << "pool_checkpoint = " << pool_checkpoint.string() << "\n";
    if (!control_checkpoint.empty()) os << "control_checkpoint = " << control_checkpoint.string() << "\n";
    os << "use_llm = " << (use_llm ? "true" : "false") << "\ndirector_endpoint = " << director.endpoint
       << "\ndirector_model = " << director.model << "\ndirector_timeout = " << director.timeout_s
       << "\ndirector_retries = " << director.retries << "\ndirector_token_env = " << director.token_env << "\n";
    return os.str();
}

uint64_t scene_seed(uint64_t master_seed, int64_t scene_index) {
    return derive_seed(master_seed, static_cast<uint64_t>(scene_index));
}

Tensor quantize_image(const Tensor& image) {
    Tensor out = image;
    for (float& v : out.storage()) v = static_cast<float>(quantize_u8(v)) / 255.0f;
    return out;
}

VideoClip generate_scene(const SceneSpec& scene, const std::optional<Tensor>& condition, const GenerationConfig& cfg,
                         const ModelBundle& bundle) {
    cfg.validate();
    cfg.check_model(bundle);
    if (!bundle.base_trained) throw StagingError("generation needs a trained base model (BASE_VG)");
    for (const auto& [m, w] : scene.action.entries())
        if (!bundle.trained_motions.count(m))
            throw StagingError("scene " + std::to_string(scene.index) + " needs the " + motion_name(m) +
                               " CamOperator, which has not been trained");
    if (condition && (!bundle.control || !bundle.control_trained))
        throw StagingError("conditioned generation needs a trained AdaControlNet (ADA_CONTROL)");
    if (scene.clip_length < 1) throw ParameterError("scene clip length must be positive");

    const uint64_t seed = scene_seed(cfg.seed, scene.index);
    const int64_t r = bundle.config.unet.resolution;
    const Shape shape{1, bundle.codec->latent_channels(), scene.clip_length, r, r};
    const TextEmbedding text = bundle.net->text_embedder().embed(scene.description);
    const MotionOverlay overlay = build_overlay(bundle.pool, scene.action);

    SamplerConfig sc;
    sc.steps = cfg.steps;
    sc.guidance = static_cast<float>(cfg.guidance);
    sc.clip_min = bundle.codec->latent_min();
    sc.clip_max = bundle.codec->latent_max();
    SampleExtras extras;
    extras.overlay = overlay.empty() ? nullptr : &overlay;

    std::optional<ConditionContext> ctx;
    BlendHook hook;
    if (condition) {
        if (condition->shape() != Shape{cfg.resolution, cfg.resolution, 3})
            throw DimensionError("condition image must be " + std::to_string(cfg.resolution) + "x" +
                                 std::to_string(cfg.resolution) + "x3");
        ctx = ConditionContext::make(*condition, *bundle.codec, derive_seed(seed, 1));
        const ControlEncoder* enc = bundle.control.get();
        const ConditionContext* c = &*ctx;
        extras.control = [enc, c](int64_t t) { return encode_condition(*enc, *c, t); };
        if (cfg.lambda > 0) hook = make_blend_hook(*ctx, {cfg.lambda, cfg.blend_min_t, cfg.blend_max_t, derive_seed(seed, 2)},
                                                   bundle.schedule);
    }

    Rng rng(derive_seed(seed, 0));
    const LatentVideo z = sample(*bundle.net, shape, text, bundle.schedule, sc, hook, rng, extras);
    VideoClip clip = bundle.codec->decode(z);
    if (ctx && cfg.pixel_norm) clip = adaptive_pixel_normalization(clip, *ctx, *cfg.pixel_norm);
    clip.meta = {scene.description, scene.action.name(), seed, scene.index};
    return clip;
}

VideoClip generate_video(const StoryBoard& board, const GenerationConfig& cfg, const ModelBundle& bundle,
                         const std::optional<Tensor>& first_condition) {
    if (board.scenes.empty()) throw InputError("storyboard has no scenes");
    std::vector<VideoClip> clips;
    std::vector<SceneSegment> segments;
    int64_t start = 0;
    std::optional<Tensor> condition;
    if (first_condition) condition = quantize_image(*first_condition);
    for (const SceneSpec& scene : board.scenes) {
        try {
            clips.push_back(generate_scene(scene, condition, cfg, bundle));
        } catch (const Error& e) {
            std::string msg = "scene " + std::to_string(scene.index) + " failed: " + e.category() + ": " + e.what();
            msg += "; " + std::to_string(clips.size()) + " earlier scene(s) completed";
            throw GenerationError(msg);
        }
        const VideoClip& clip = clips.back();
        segments.push_back({scene.index, scene.description, scene.action.name(), start, clip.num_frames(),
                            clip.meta.seed, condition});
        start += clip.num_frames();
        // The next scene starts from the frame as written to disk.
        condition = quantize_image(clip.frame(clip.num_frames() - 1));
    }
    VideoClip out = clips.size() == 1 ? clips.front() : concat_clips(clips);
    out.meta = {board.instruction, "", cfg.seed, 0};
    if (clips.size() == 1) out.meta = clips.front().meta;
    out.scenes = std::move(segments);
    return out;
}

void write_video(const VideoClip& clip, const fs::path& dir) {
    clip.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if ((name.rfind("frame_", 0) == 0 || name.rfind("cond_", 0) == 0) && entry.path().extension() == ".ppm")
            fs::remove(entry.path());
    }
    for (int64_t i = 0; i < clip.num_frames(); ++i) write_ppm(dir / frame_name(i), clip.frame(i));

    nlohmann::json scenes = nlohmann::json::array();
    for (const SceneSegment& s : clip.scenes) {
        nlohmann::json js = {{"index", s.index},         {"description", s.description}, {"action", s.action},
                             {"start_frame", s.start_frame}, {"length", s.length},           {"seed", s.seed},
                             {"condition", nullptr}};
        if (s.condition_image) {
            write_ppm(dir / condition_name(s.index), *s.condition_image);
            js["condition"] = condition_name(s.index);
        }
        scenes.push_back(js);
    }
    const nlohmann::json manifest = {{"format", kVideoFormat},
                                     {"frames", clip.num_frames()},
                                     {"height", clip.height()},
                                     {"width", clip.width()},
                                     {"caption", clip.meta.caption},
                                     {"motion", clip.meta.motion},
                                     {"seed", clip.meta.seed},
                                     {"scene_index", clip.meta.scene_index},
                                     {"scenes", scenes}};
    write_json_file(dir / "manifest.json", manifest);
}

VideoClip read_video(const fs::path& dir) {
    if (!fs::is_regular_file(dir / "manifest.json")) throw IoError("no manifest.json in " + dir.string());
    const nlohmann::json m = read_json_file(dir / "manifest.json");
    try {
        if (m.at("format").get<std::string>() != kVideoFormat)
            throw CompatibilityError("unsupported video format '" + m.at("format").get<std::string>() + "'");
        const int64_t f = m.at("frames").get<int64_t>(), h = m.at("height").get<int64_t>(),
                      w = m.at("width").get<int64_t>();
        int64_t present = 0;
        for (const auto& entry : fs::directory_iterator(dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".ppm") ++present;
        }
        if (present != f)
            throw IntegrityError("manifest declares " + std::to_string(f) + " frames but " + std::to_string(present) +
                                 " frame files are present in " + dir.string());
        VideoClip clip(f, h, w);
        for (int64_t i = 0; i < f; ++i) {
            const fs::path p = dir / frame_name(i);
            if (!fs::exists(p)) throw IntegrityError("missing " + p.string());
            const Tensor img = read_ppm(p);
            if (img.shape() != Shape{h, w, 3}) throw IntegrityError(p.string() + " does not match the manifest size");
            clip.set_frame(i, img);
        }
        clip.meta = {m.value("caption", ""), m.value("motion", ""), m.value("seed", uint64_t{0}),
                     m.value("scene_index", int64_t{0})};
        int64_t covered = 0;
        for (const auto& js : m.at("scenes")) {
            SceneSegment s;
            s.index = js.at("index").get<int64_t>();
            s.description = js.at("description").get<std::string>();
            s.action = js.at("action").get<std::string>();
            s.start_frame = js.at("start_frame").get<int64_t>();
            s.length = js.at("length").get<int64_t>();
            s.seed = js.at("seed").get<uint64_t>();
            if (!js.at("condition").is_null()) s.condition_image = read_ppm(dir / js.at("condition").get<std::string>());
            if (s.start_frame != covered || s.length < 1)
                throw IntegrityError("scene " + std::to_string(s.index) + " frame range is inconsistent");
            covered += s.length;
            clip.scenes.push_back(std::move(s));
        }
        if (!clip.scenes.empty() && covered != f)
            throw IntegrityError("scenes cover " + std::to_string(covered) + " of " + std::to_string(f) + " frames");
        return clip;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed video manifest in " + dir.string() + ": " + e.what());
    }
}

}  // namespace mcam
