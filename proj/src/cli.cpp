#include "mcam/cli.hpp"

#include <algorithm>
#include <ostream>

#include <CLI11.hpp>

#include "mcam/director.hpp"
#include "mcam/errors.hpp"
#include "mcam/eval.hpp"
#include "mcam/image_io.hpp"
#include "mcam/motion_sim.hpp"
#include "mcam/pipeline.hpp"
#include "mcam/tensor_io.hpp"
#include "mcam/training.hpp"

namespace mcam {

namespace fs = std::filesystem;

namespace {

struct TrainFlags {
    int64_t epochs = 0;
    double lr = 0;
    int64_t batch = 4;
    int64_t max_steps = 0;
    std::string data;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, int64_t epochs, double lr) {
    f.epochs = epochs;
    f.lr = lr;
    cmd->add_option("--data", f.data, "Dataset directory written by simulate-data")->required();
    cmd->add_option("--epochs", f.epochs, "Passes over the dataset")->capture_default_str();
    cmd->add_option("--lr", f.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--batch", f.batch, "Clips per step")->capture_default_str();
    cmd->add_option("--max-steps", f.max_steps, "Cap on steps per epoch (0 = full pass)");
}

TrainConfig train_config(const TrainFlags& f, uint64_t seed, std::ostream& out, const std::string& tag) {
    TrainConfig tc;
    tc.epochs = f.epochs;
    tc.lr = f.lr;
    tc.batch_size = f.batch;
    tc.max_steps_per_epoch = f.max_steps;
    tc.seed = seed;
    tc.on_epoch = [&out, tag](int64_t e, double loss) { out << tag << " epoch " << e << " loss " << loss << "\n" << std::flush; };
    return tc;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-scene video generation with modular camera motion", "mcam"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir;
    std::optional<uint64_t> seed_flag;
    app.add_option("--config", config_path, "Key = value generation config file");
    app.add_option("--seed", seed_flag, "Master seed (overrides the config)");
    app.add_option("--out", out_dir, "Output directory");

    DatasetOptions sim;
    std::string sim_motion;
    auto* simulate = app.add_subcommand("simulate-data", "Render a labeled clip dataset from synthetic scenes");
    simulate->add_option("--per-motion", sim.n_per_motion, "Clips per motion")->capture_default_str();
    simulate->add_option("--static", sim.n_static, "Additional static clips")->capture_default_str();
    simulate->add_option("--frames", sim.frames, "Frames per clip")->capture_default_str();
    simulate->add_option("--resolution", sim.resolution, "Clip resolution in pixels")->capture_default_str();
    simulate->add_option("--motion", sim_motion, "Only this motion (default: all six)");

    const DeskRecipe recipe;
    TrainFlags base_flags, cam_flags, ctl_flags;
    auto* train_base_cmd = app.add_subcommand("train-base", "Train the base video generator");
    add_train_flags(train_base_cmd, base_flags, recipe.base_epochs, recipe.lr);
    auto* train_cam_cmd = app.add_subcommand("train-cam", "Train one CamOperator on a frozen base");
    std::string cam_motion;
    train_cam_cmd->add_option("motion", cam_motion, "ZoomIn, ZoomOut, PanLeft, PanRight, TiltUp or TiltDown")->required();
    add_train_flags(train_cam_cmd, cam_flags, recipe.cam_epochs, recipe.lr);
    auto* train_ctl_cmd = app.add_subcommand("train-control", "Train the AdaControlNet branch");
    add_train_flags(train_ctl_cmd, ctl_flags, recipe.control_epochs, recipe.lr);

    std::string instruction, condition_path;
    bool no_llm = false;
    auto* generate = app.add_subcommand("generate", "Turn an instruction into a multi-scene video");
    generate->add_option("--instruction", instruction, "Multi-scene instruction")->required();
    generate->add_flag("--no-llm", no_llm, "Use the phrase grammar instead of the chat model");
    generate->add_option("--condition", condition_path, "PPM condition image for the first scene");
    std::string models_dir;
    generate->add_option("--models", models_dir, "Model directory (overrides model_dir from the config)");

    std::string video_dir, eval_instruction;
    auto* evaluate = app.add_subcommand("evaluate", "Score a generated video directory");
    evaluate->add_option("video", video_dir, "Video directory")->required();
    evaluate->add_option("--instruction", eval_instruction, "Text to score alignment against");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << one_line(e.what()) << "\n";
        return kExitUsage;
    }

    try {
        GenerationConfig cfg = config_path.empty() ? GenerationConfig{} : GenerationConfig::load(config_path);
        if (seed_flag) cfg.seed = *seed_flag;
        const bool training = train_base_cmd->parsed() || train_cam_cmd->parsed() || train_ctl_cmd->parsed();
        if (training && !out_dir.empty()) cfg.model_dir = out_dir;
        if (!models_dir.empty()) cfg.model_dir = models_dir;
        const ModelPaths paths = cfg.model_paths();

        if (simulate->parsed()) {
            if (!sim_motion.empty()) {
                const auto m = parse_basic_motion(sim_motion);
                if (!m) throw ParameterError("unknown motion '" + sim_motion + "'");
                sim.motions = {*m};
            }
            sim.seed = cfg.seed;
            const ClipDataset ds = build_dataset(sim);
            const fs::path dir = out_dir.empty() ? fs::path("data") : fs::path(out_dir);
            save_dataset(ds, dir);
            out << "wrote " << ds.clips.size() << " clips to " << dir.string() << "\n";
        } else if (train_base_cmd->parsed()) {
            const ClipDataset ds = load_dataset(base_flags.data);
            ModelConfig mc = ModelConfig::desk();
            mc.frames = ds.frames;
            mc.seed = cfg.seed;
            const auto codec = make_codec(mc.codec);
            if (ds.resolution % codec->downscale())
                throw DataError("dataset resolution " + std::to_string(ds.resolution) + " is not divisible by the codec");
            mc.unet.resolution = ds.resolution / codec->downscale();
            ModelBundle bundle = ModelBundle::create(mc);
            const Checkpoint ck = train_base(bundle, ds, train_config(base_flags, cfg.seed, out, "base"));
            save_stage(bundle, TrainStage::base(), ck, paths);
            out << "saved BASE_VG to " << paths.base.string() << "\n";
        } else if (train_cam_cmd->parsed()) {
            const auto m = parse_basic_motion(cam_motion);
            if (!m) throw ParameterError("unknown motion '" + cam_motion + "'");
            ModelBundle bundle = load_bundle(paths);
            // Mixed datasets are fine here: keep the clips of the requested motion.
            ClipDataset ds = load_dataset(cam_flags.data);
            std::erase_if(ds.clips, [&](const LabeledClip& c) { return c.motion != MotionPattern(*m); });
            if (ds.clips.empty()) throw DataError("no " + cam_motion + " clips in " + cam_flags.data);
            Checkpoint ck;
            train_cam_operator(bundle, *m, ds, train_config(cam_flags, cfg.seed, out, "cam " + cam_motion), &ck);
            save_stage(bundle, TrainStage::cam(*m), ck, paths);
            out << "saved CamOperator " << cam_motion << " to " << paths.pool.string() << "\n";
        } else if (train_ctl_cmd->parsed()) {
            ModelBundle bundle = load_bundle(paths);
            const ClipDataset ds = load_dataset(ctl_flags.data);
            const Checkpoint ck = train_adacontrolnet(bundle, ds, train_config(ctl_flags, cfg.seed, out, "control"));
            save_stage(bundle, TrainStage::ada(), ck, paths);
            out << "saved ADA_CONTROL to " << paths.control.string() << "\n";
        } else if (generate->parsed()) {
            const ModelBundle bundle = load_bundle(paths);
            std::unique_ptr<DirectorClient> client;
            if (cfg.use_llm && !no_llm)
                client = std::make_unique<DirectorClient>(cfg.director, std::make_shared<HttpTransport>(cfg.director));
            StoryBoard board = validate(decompose(instruction, client.get()), bundle.pool);
            for (auto& s : board.scenes) s.clip_length = cfg.frames;
            for (const auto& d : board.diagnostics) err << "director: " << one_line(d) << "\n";
            std::optional<Tensor> condition;
            if (!condition_path.empty()) condition = read_ppm(condition_path);
            const VideoClip video = generate_video(board, cfg, bundle, condition);
            const fs::path dir = out_dir.empty() ? fs::path("video") : fs::path(out_dir);
            write_video(video, dir);
            write_json_file(dir / "storyboard.json", board);
            out << "wrote " << video.num_frames() << " frames in " << board.scenes.size() << " scene(s) to "
                << dir.string() << " (" << provenance_name(board.provenance) << ")\n";
        } else if (evaluate->parsed()) {
            const VideoClip video = read_video(video_dir);
            const PaletteEmbedder embedder;
            const MetricsReport report = evaluate_video(video, &embedder, eval_instruction);
            fs::path target = out_dir.empty() ? fs::path(video_dir) : fs::path(out_dir);
            if (out_dir.empty()) {
                target = fs::path(video_dir).lexically_normal();
                if (target.filename().empty()) target = target.parent_path();
                target += ".metrics.json";
            }
            write_json_file(target, report);
            out << nlohmann::json(report).dump(2) << "\n";
        }
        return kExitOk;
    } catch (const StagingError& e) {
        err << "error: " << e.category() << ": " << one_line(e.what()) << "\n";
        return kExitStaging;
    } catch (const Error& e) {
        err << "error: " << e.category() << ": " << one_line(e.what()) << "\n";
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: internal: " << one_line(e.what()) << "\n";
        return kExitFailure;
    }
}

}  // namespace mcam
