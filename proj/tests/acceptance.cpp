// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <sys/resource.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "mcam/ada_controlnet.hpp"
#include "mcam/cam_operator.hpp"
#include "mcam/director.hpp"
#include "mcam/errors.hpp"
#include "mcam/eval.hpp"
#include "mcam/pipeline.hpp"
#include "mcam/tensor_io.hpp"
#include "mcam/training.hpp"
#include "test_util.hpp"

using namespace mcam;
using namespace mcam::testing;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

double peak_rss_mb() {
    rusage u{};
    getrusage(RUSAGE_SELF, &u);
    return static_cast<double>(u.ru_maxrss) / 1024.0;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) { return a.shape() == b.shape() && a.bitwise_equal(b); }

std::string secs(double v) {
    std::ostringstream os;
    os << std::fixed;
    os.precision(0);
    os << v << " s";
    return os.str();
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.precision(digits);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------- 1. equations

void equations(Outcome& o) {
    const auto s = build_schedule(1000, ScheduleKind::Linear, 1e-4, 2e-2);
    const Tensor z0 = random_tensor({1, 2, 1, 2, 2}, 5);
    int moment_misses = 0;
    for (int64_t t : {10, 250, 500, 750, 1000}) {
        const double ab = s.alpha_bar_at(t);
        const int n = 10000;
        std::vector<double> sum(static_cast<size_t>(z0.numel())), sq(sum.size());
        Rng rng(100 + static_cast<uint64_t>(t));
        for (int d = 0; d < n; ++d) {
            const Tensor zt = forward_noise(LatentVideo(z0), LatentVideo(rng.normal_tensor(z0.shape())), t, s).data;
            for (int64_t i = 0; i < z0.numel(); ++i) {
                sum[i] += zt[i];
                sq[i] += static_cast<double>(zt[i]) * zt[i];
            }
        }
        for (int64_t i = 0; i < z0.numel(); ++i) {
            const double mean = sum[i] / n, var = sq[i] / n - mean * mean, ev = 1.0 - ab;
            moment_misses += std::abs(mean - std::sqrt(ab) * z0[i]) > 3.0 * std::sqrt(ev / n);
            moment_misses += std::abs(var - ev) > 3.0 * ev * std::sqrt(2.0 / (n - 1));
        }
    }
    o.require(moment_misses == 0, "forward noise moments");

    double stat_err = 0, idem_err = 0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        const VideoClip clip(random_tensor({4, 12, 12, 3}, seed, 0.1f, 0.9f));
        const ChannelStats target = channel_stats(random_tensor({12, 12, 3}, 50 + seed, 0.2f, 0.7f));
        const VideoClip once = adaptive_pixel_normalization(clip, target, PixelNormMode::PerFrame);
        for (int64_t i = 0; i < 4; ++i) {
            const ChannelStats st = channel_stats(once.frame(i));
            for (int c = 0; c < 3; ++c)
                stat_err = std::max({stat_err, std::abs(st.mean[c] - target.mean[c]), std::abs(st.std[c] - target.std[c])});
        }
        const VideoClip twice = adaptive_pixel_normalization(once, target, PixelNormMode::PerFrame);
        idem_err = std::max(idem_err, static_cast<double>(max_abs_diff(once.frames, twice.frames)));
    }
    o.require(stat_err <= 1e-6, "normalized statistics");
    o.require(idem_err <= 1e-6, "normalization idempotence");

    const PixelCodec codec;
    const ConditionContext ctx = ConditionContext::make(random_tensor({4, 4, 3}, 2, 0.0f, 1.0f), codec, 7);
    const Tensor z = random_tensor({3, 4, 4}, 3);
    BlendConfig cfg;
    cfg.lambda = 0.5;
    Rng rng(2024);
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
        bool replaced = false;
        randomized_blend(z, ctx, 500, cfg, rng, s, &replaced);
        hits += replaced;
    }
    const double freq = hits / 10000.0;
    o.require(std::abs(freq - 0.5) <= 0.015, "blend frequency");

    bool extremes = true;
    Rng a(1), b(1);
    for (int64_t t : {1, 500, 1000}) {
        cfg.lambda = 0.0;
        extremes &= randomized_blend(z, ctx, t, cfg, a, s).bitwise_equal(z);
        cfg.lambda = 1.0;
        extremes &= randomized_blend(z, ctx, t, cfg, b, s).bitwise_equal(ctx.noised(t, s));
    }
    o.require(extremes, "lambda 0 and 1 exactness");
    o.detail << "moment misses " << moment_misses << ", stats err " << stat_err << ", idempotence err " << idem_err
             << ", blend freq " << freq;
}

// ---------------------------------------------------------------- 2. transparency

void transparency(Outcome& o) {
    DenoiserNet fresh(tiny_unet(), small_vocab(), 3);
    int layers = 0;
    bool temporal_ok = true;
    for (const TemporalLayer* layer : fresh.temporal_layers()) {
        const Var x(random_tensor({6, layer->channels, 3, 3}, 40 + static_cast<uint64_t>(layers)));
        for (int64_t frames : {1, 2, 3, 6}) temporal_ok &= temporal_attention(*layer, x, frames).value().bitwise_equal(x.value());
        ++layers;
    }
    o.require(temporal_ok, "fresh temporal layers");

    DenoiserNet net(tiny_unet(), small_vocab(), 3);
    randomize_parameters(net.parameters(), 4, 0.1f);
    const Tensor zin = random_tensor({1, 3, 3, 8, 8}, 31);
    const TextEmbedding text = net.text_embedder().embed("blue sky");
    const Tensor base = denoise(net, zin, 300, text);
    CamOperatorPool pool;
    pool.initialize_all(net, 5);
    bool lora_ok = true;
    for (BasicMotion m : kBasicMotions) {
        const AttachedNet h = attach(net, pool, m);
        lora_ok &= denoise(h.net(), zin, 300, text, nullptr, &h.overlay()).bitwise_equal(base);
    }
    o.require(lora_ok, "fresh LoRA adapters");

    for (auto& ad : pool.adapters(BasicMotion::ZoomIn)) {
        Rng rng(6);
        for (float& x : ad.b.mutable_value().storage()) x = rng.uniform(-0.5f, 0.5f);
    }
    const AttachedNet h = attach(net, pool, BasicMotion::ZoomIn);
    const bool active = !denoise(h.net(), zin, 300, text, nullptr, &h.overlay()).bitwise_equal(base);
    const bool detached = denoise(detach(h), zin, 300, text).bitwise_equal(base);
    o.require(active && detached, "attach/detach round trip");

    const ControlEncoder enc(net, 9);
    const PixelCodec codec;
    const ConditionContext ctx = ConditionContext::make(random_tensor({8, 8, 3}, 2, 0.0f, 1.0f), codec, 7);
    const auto schedule = build_schedule(1000, ScheduleKind::Linear, 1e-4, 2e-2);
    SamplerConfig sc;
    sc.steps = 5;
    Rng ra(8), rb(8);
    SampleExtras extras;
    extras.control = [&](int64_t t) { return encode_condition(enc, ctx, t); };
    const LatentVideo plain = sample(net, {1, 3, 2, 8, 8}, text, schedule, sc, nullptr, ra);
    const LatentVideo conditioned = sample(net, {1, 3, 2, 8, 8}, text, schedule, sc, nullptr, rb, extras);
    o.require(plain.data.bitwise_equal(conditioned.data), "fresh control encoder");
    o.detail << layers << " temporal layers, 6 adapters, control encoder checked bitwise";
}

// ---------------------------------------------------------------- 3. gradients

void gradients(Outcome& o) {
    DenoiserNet net(tiny_unet(8), small_vocab(), 21);
    const nn::ParamSet ps = net.parameters();
    randomize_parameters(ps, 22, 0.2f);
    const auto schedule = build_schedule(1000, ScheduleKind::Linear, 1e-4, 2e-2);
    const LatentVideo z0(random_tensor({1, 3, 2, 8, 8}, 23));
    const std::vector<int64_t> ts{400};
    const Var text = stack_text({net.text_embedder().embed_var("field and blue sky")});
    auto loss = [&] {
        Rng rng(24);
        return training_loss(net, z0, ts, text, nullptr, nullptr, schedule, rng);
    };
    std::vector<Var> params;
    for (const auto& [name, v] : ps.items()) params.push_back(v);
    std::vector<std::pair<Var, int64_t>> picks;
    Rng pick(25);
    while (picks.size() < 32) {
        const Var& p = params[static_cast<size_t>(pick.randint(0, static_cast<int64_t>(params.size()) - 1))];
        picks.emplace_back(p, pick.randint(0, p.value().numel() - 1));
    }
    for (auto& p : params) p.zero_grad();
    ag::backward(loss());
    double diff2 = 0, norm2 = 0;
    const float h = 1e-3f;
    for (auto& [p, idx] : picks) {
        Var v = p;
        const float analytic = v.grad().empty() ? 0.0f : v.grad()[idx];
        const float orig = v.value()[idx];
        v.mutable_value()[idx] = orig + h;
        const double up = loss().value()[0];
        v.mutable_value()[idx] = orig - h;
        const double down = loss().value()[0];
        v.mutable_value()[idx] = orig;
        const double numeric = (up - down) / (2.0 * h);
        diff2 += (numeric - analytic) * (numeric - analytic);
        norm2 += static_cast<double>(analytic) * analytic;
    }
    const double rel = norm2 > 0 ? std::sqrt(diff2 / norm2) : INFINITY;
    o.require(rel <= 1e-2, "relative error");
    o.detail << "32 parameters, relative error " << fmt(rel, 3);
}

// ---------------------------------------------------------------- 4. simulation

void simulation(Outcome& o) {
    DatasetOptions opt;
    opt.n_per_motion = 5;
    opt.resolution = 48;
    opt.frames = 8;
    opt.seed = 4;
    const ClipDataset ds = build_dataset(opt);
    int self = 0;
    for (const auto& c : ds.clips) self += classify_motion(estimate_flow(c.clip)).motion == c.motion;
    o.require(self == static_cast<int>(ds.clips.size()) && ds.clips.size() == 30, "self-classification");

    const MotionPattern comp = MotionPattern::parse("ZoomIn+PanRight");
    int comp_ok = 0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const LabeledClip c = simulate_clip(comp, 9000 + seed, opt);
        comp_ok += classify_motion(estimate_flow(c.clip)).motion.same_basics(comp);
    }
    o.require(comp_ok >= 18, "composite classification");
    o.detail << self << "/" << ds.clips.size() << " clips self-classify, composite " << comp_ok << "/20";
}

// ---------------------------------------------------------------- 5. director

void director(Outcome& o) {
    const nlohmann::json fixture = read_json_file(std::string(MCAM_TEST_DATA) + "/director_fixture.json");
    int exact = 0;
    for (const auto& item : fixture) {
        const StoryBoard b = fallback_parse(item.at("instruction").get<std::string>());
        bool same = b.scenes.size() == item.at("scenes").size();
        for (size_t i = 0; same && i < b.scenes.size(); ++i) {
            same = b.scenes[i].index == static_cast<int64_t>(i + 1) &&
                   b.scenes[i].description == item.at("scenes")[i].at(0).get<std::string>() &&
                   b.scenes[i].action.name() == item.at("scenes")[i].at(1).get<std::string>();
        }
        exact += same;
    }
    o.require(exact == static_cast<int>(fixture.size()) && fixture.size() == 20, "fixture storyboards");

    const std::string instruction = fixture[0].at("instruction").get<std::string>();
    const std::string reply =
        "[Scene 1: \"field and blue sky, house in the distance\", Action: ZoomIn]\n"
        "[Scene 2: \"large fields\", Action: PanLeft]";
    DirectorConfig cfg;
    cfg.retries = 2;
    auto good = std::make_shared<CannedTransport>(std::vector<std::optional<std::string>>{reply});
    const StoryBoard llm = decompose(instruction, std::make_unique<DirectorClient>(cfg, good).get());
    o.require(llm.provenance == Provenance::Llm && good->prompts().size() == 1 &&
                  good->prompts()[0] == build_director_prompt(instruction) && llm.scenes.size() == 2,
              "well-formed reply");

    auto flaky = std::make_shared<CannedTransport>(std::vector<std::optional<std::string>>{std::nullopt, "no scenes", reply});
    const StoryBoard retried = decompose(instruction, std::make_unique<DirectorClient>(cfg, flaky).get());
    o.require(retried.provenance == Provenance::Llm && flaky->prompts().size() == 3, "retry");

    auto bad = std::make_shared<CannedTransport>(
        std::vector<std::optional<std::string>>{"[Scene 1: \"x\", Action: Barrel Roll]"});
    const StoryBoard fell = decompose(instruction, std::make_unique<DirectorClient>(cfg, bad).get());
    o.require(fell.provenance == Provenance::Fallback && fell.scenes == fallback_parse(instruction).scenes &&
                  !fell.diagnostics.empty() && bad->prompts().size() == 3,
              "malformed-reply fallback");
    o.detail << exact << "/" << fixture.size() << " fixture storyboards exact, canned stub contract checked";
}

// ---------------------------------------------------------------- 6. desk training

struct Desk {
    ModelBundle bundle;
    ClipDataset base_data;
    ModelPaths paths;
    bool ready = false;
};

GenerationConfig desk_generation(uint64_t seed) {
    GenerationConfig cfg;
    cfg.frames = 8;
    cfg.resolution = 48;
    cfg.seed = seed;
    cfg.use_llm = false;
    return cfg;
}

SceneSpec desk_scene(const MotionPattern& action, uint64_t seed) {
    SceneSpec s;
    s.index = 1;
    s.description = generate_scene_image(seed, 128, 128, 48).caption;
    s.action = action;
    s.clip_length = 8;
    return s;
}

void training(Outcome& o, Desk& desk) {
    const clk::time_point t0 = clk::now();
    const DeskRecipe recipe;
    DatasetOptions base_opt;
    base_opt.n_per_motion = recipe.base_clips_per_motion;
    base_opt.seed = 1;
    desk.base_data = build_dataset(base_opt);

    ModelConfig mc = ModelConfig::desk();
    mc.seed = 2;
    desk.bundle = ModelBundle::create(mc);
    TrainConfig tc;
    tc.lr = recipe.lr;
    tc.epochs = recipe.base_epochs;
    tc.seed = 3;
    const Checkpoint base_ck = train_base(desk.bundle, desk.base_data, tc);
    save_stage(desk.bundle, TrainStage::base(), base_ck, desk.paths);
    const auto& losses = base_ck.loss_history;
    o.require(!losses.empty() && losses.back() < losses.front(), "base loss decrease");
    o.detail << desk.base_data.clips.size() << " base clips, loss " << fmt(losses.front()) << " -> " << fmt(losses.back())
             << " in " << secs(seconds_since(t0)) << "; ";

    for (BasicMotion m : kBasicMotions) {
        DatasetOptions cam_opt;
        cam_opt.n_per_motion = 50;
        cam_opt.motions = {m};
        cam_opt.seed = 100 + static_cast<uint64_t>(m);
        TrainConfig ct;
        ct.lr = recipe.lr;
        ct.epochs = recipe.cam_epochs;
        ct.seed = 7 + static_cast<uint64_t>(m);
        Checkpoint ck;
        train_cam_operator(desk.bundle, m, build_dataset(cam_opt), ct, &ck);
        save_stage(desk.bundle, TrainStage::cam(m), ck, desk.paths);
    }
    desk.ready = true;
    o.detail << "trained in " << secs(seconds_since(t0)) << "; ";

    bool fidelity = true;
    for (BasicMotion m : kBasicMotions) {
        int hits = 0;
        for (uint64_t s = 0; s < 20; ++s) {
            const VideoClip clip = generate_scene(desk_scene(m, 500 + s), std::nullopt, desk_generation(1000 + s), desk.bundle);
            hits += classify_motion(estimate_flow(clip)).motion == MotionPattern(m);
        }
        fidelity &= hits >= 14;
        o.detail << motion_name(m) << " " << hits << "/20 ";
    }
    o.require(fidelity, "motion fidelity");

    int opposite = 0;
    for (uint64_t s = 0; s < 20; ++s) {
        const GenerationConfig cfg = desk_generation(2000 + s);
        const double in = mean_divergence(estimate_flow(generate_scene(desk_scene(BasicMotion::ZoomIn, 700 + s), std::nullopt, cfg, desk.bundle)));
        const double out = mean_divergence(estimate_flow(generate_scene(desk_scene(BasicMotion::ZoomOut, 700 + s), std::nullopt, cfg, desk.bundle)));
        opposite += (in > 0 && out < 0) || (in < 0 && out > 0);
    }
    o.require(opposite >= 16, "zoom divergence signs");
    const double elapsed = seconds_since(t0), rss = peak_rss_mb();
    o.require(elapsed <= 45 * 60, "45 minute budget");
    o.require(rss <= 4096, "4 GB memory budget");
    o.detail << "; zoom signs opposite " << opposite << "/20; " << secs(elapsed) << ", peak RSS " << fmt(rss, 4) << " MB";
}

// ---------------------------------------------------------------- 7. consistency

StoryBoard two_scenes() {
    return fallback_parse("A field with blue sky, the camera zooms in. Then the camera pans left across a lake.");
}

void consistency(Outcome& o, Desk& desk) {
    if (!desk.ready) throw StagingError("desk models from the training criterion are unavailable");
    const clk::time_point t0 = clk::now();
    const DeskRecipe recipe;
    TrainConfig tc;
    tc.lr = recipe.lr;
    tc.epochs = recipe.control_epochs;
    tc.seed = 13;
    const Checkpoint ck = train_adacontrolnet(desk.bundle, desk.base_data, tc);
    save_stage(desk.bundle, TrainStage::ada(), ck, desk.paths);
    o.detail << "control trained in " << secs(seconds_since(t0)) << "; ";

    const StoryBoard board = two_scenes();
    double on = 0, off = 0;
    for (uint64_t s = 0; s < 10; ++s) {
        GenerationConfig cfg = desk_generation(3000 + s);
        on += *color_consistency(generate_video(board, cfg, desk.bundle)) / 10;
        cfg.lambda = 0;
        cfg.pixel_norm.reset();
        off += *color_consistency(generate_video(board, cfg, desk.bundle)) / 10;
    }
    o.require(on < off, "consistency ablation");
    o.detail << "color consistency on " << fmt(on) << " vs off " << fmt(off) << "; L2 by lambda";

    double prev = INFINITY, worst_at_one = 0;
    bool monotone = true;
    for (double lambda : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        double l2 = 0;
        for (uint64_t s = 0; s < 10; ++s) {
            GenerationConfig cfg = desk_generation(4000 + s);
            cfg.lambda = lambda;
            const VideoClip v = generate_video(board, cfg, desk.bundle);
            const Tensor& cond = *v.scenes[1].condition_image;
            const Tensor first = v.frame(v.scenes[1].start_frame);
            double sq = 0, abs_sum = 0;
            for (int64_t i = 0; i < first.numel(); ++i) {
                const double d = first[i] - cond[i];
                sq += d * d;
                abs_sum += std::abs(d);
            }
            l2 += std::sqrt(sq / static_cast<double>(first.numel())) / 10;
            if (lambda == 1.0) worst_at_one = std::max(worst_at_one, abs_sum / static_cast<double>(first.numel()));
        }
        monotone &= l2 <= prev;
        prev = l2;
        o.detail << " " << lambda << ":" << fmt(l2);
    }
    o.require(monotone, "lambda sweep monotone");
    o.require(worst_at_one <= 0.05, "lambda 1 first frame");
    const double elapsed = seconds_since(t0);
    o.require(elapsed <= 10 * 60, "10 minute budget");
    o.detail << "; worst mean abs error at lambda 1 " << fmt(worst_at_one) << "; " << secs(elapsed);
}

// ---------------------------------------------------------------- 8. determinism

// Trains every stage for one step on a tiny configuration.
void tiny_stack(ModelBundle& bundle, const ModelPaths& paths) {
    DatasetOptions opt;
    opt.n_per_motion = 1;
    opt.frames = 4;
    opt.resolution = 32;
    opt.scene_size = 64;
    const ClipDataset ds = build_dataset(opt);
    bundle = ModelBundle::create(tiny_model(32, 4));
    TrainConfig tc;
    tc.lr = 1e-3;
    tc.max_steps_per_epoch = 1;
    save_stage(bundle, TrainStage::base(), train_base(bundle, ds, tc), paths);
    for (BasicMotion m : kBasicMotions) {
        ClipDataset one = ds;
        std::erase_if(one.clips, [&](const LabeledClip& c) { return c.motion != MotionPattern(m); });
        Checkpoint ck;
        train_cam_operator(bundle, m, one, tc, &ck);
        save_stage(bundle, TrainStage::cam(m), ck, paths);
    }
    save_stage(bundle, TrainStage::ada(), train_adacontrolnet(bundle, ds, tc), paths);
}

void determinism(Outcome& o, Desk& desk) {
    const fs::path root = fs::temp_directory_path() / "mcam_acceptance_persist";
    fs::remove_all(root);
    ModelBundle tiny;
    const ModelBundle* stack = &desk.bundle;
    ModelPaths paths = desk.paths;
    GenerationConfig cfg = desk_generation(77);
    if (!desk.ready || !desk.bundle.control_trained) {
        paths = ModelPaths::under(root / "models");
        tiny_stack(tiny, paths);
        stack = &tiny;
        cfg.resolution = 32;
        cfg.frames = 4;
        o.detail << "(tiny stack) ";
    }
    StoryBoard board = two_scenes();
    for (auto& s : board.scenes) s.clip_length = cfg.frames;
    const VideoClip a = generate_video(board, cfg, *stack);
    const VideoClip b = generate_video(board, cfg, *stack);
    o.require(bitwise_equal(a.frames, b.frames), "end-to-end determinism");

    const ModelBundle back = load_bundle(paths);
    const auto before = stack->snapshot(), after = back.snapshot();
    bool same = before.size() == after.size();
    for (const auto& [name, t] : before) same = same && after.count(name) && bitwise_equal(t, after.at(name));
    o.require(same, "checkpoint round trip");
    o.require(bitwise_equal(generate_video(board, cfg, back).frames, a.frames), "reloaded models reproduce the video");

    save_pool(stack->pool, root / "pool");
    const CamOperatorPool pool = load_pool(root / "pool");
    bool pool_same = true;
    for (BasicMotion m : kBasicMotions) {
        const auto& x = stack->pool.adapters(m);
        const auto& y = pool.adapters(m);
        pool_same &= x.size() == y.size();
        for (size_t i = 0; pool_same && i < x.size(); ++i)
            pool_same &= x[i].target == y[i].target && bitwise_equal(x[i].a.value(), y[i].a.value()) &&
                         bitwise_equal(x[i].b.value(), y[i].b.value());
    }
    o.require(pool_same, "pool round trip");

    write_video(a, root / "video");
    const VideoClip disk = read_video(root / "video");
    const float err = disk.frames.shape() == a.frames.shape() ? max_abs_diff(disk.frames, a.frames) : INFINITY;
    o.require(err <= 1.0f / 255.0f && disk.scenes.size() == a.scenes.size() && disk.meta.seed == a.meta.seed,
              "video round trip");
    o.detail << before.size() << " tensors, video max error " << fmt(err * 255.0f, 3) << "/255";
    fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
    // Optional arguments select criteria by number; the default runs all of them.
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

    const fs::path model_root = fs::temp_directory_path() / "mcam_acceptance_models";
    fs::remove_all(model_root);
    Desk desk;
    desk.paths = ModelPaths::under(model_root);

    struct Criterion {
        int id;
        const char* name;
        std::function<void(Outcome&)> run;
    };
    const std::vector<Criterion> criteria{
        {1, "equation exactness", equations},
        {2, "zero-init transparency", transparency},
        {3, "gradient check", gradients},
        {4, "simulation and oracle loop", simulation},
        {5, "director", director},
        {6, "desk training and motion fidelity", [&](Outcome& o) { training(o, desk); }},
        {7, "multi-scene consistency", [&](Outcome& o) { consistency(o, desk); }},
        {8, "determinism and persistence", [&](Outcome& o) { determinism(o, desk); }},
    };
    int failed = 0;
    int ran = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        ++ran;
        Outcome o;
        const clk::time_point t0 = clk::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "[exception: " << e.what() << "]";
        }
        failed += !o.pass;
        std::printf("criterion %d %s: %s (%.1f s) %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", seconds_since(t0),
                    o.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("peak RSS %.0f MB, %d of %d criteria failed\n", peak_rss_mb(), failed, ran);
    fs::remove_all(model_root);
    return failed == 0 ? 0 : 1;
}
