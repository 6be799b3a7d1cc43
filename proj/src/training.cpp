#include "mcam/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mcam/errors.hpp"

namespace mcam {

// ---------------------------------------------------------------- optimizer

void Adam::step(const std::vector<std::pair<std::string, Var>>& params) {
    ++t_;
    if (lr_ == 0.0) return;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const auto b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
    const auto step_size = static_cast<float>(lr_ / bc1);
    const auto inv_bc2 = static_cast<float>(1.0 / bc2);
    const auto eps = static_cast<float>(eps_);
    for (const auto& [name, var] : params) {
        const Tensor& g = var.grad();
        if (g.empty()) continue;
        auto& st = state_[name];
        if (st.m.empty()) {
            st.m = Tensor::zeros(g.shape());
            st.v = Tensor::zeros(g.shape());
        }
        Var p = var;
        Tensor& w = p.mutable_value();
        for (int64_t i = 0; i < w.numel(); ++i) {
            st.m[i] = b1 * st.m[i] + (1.0f - b1) * g[i];
            st.v[i] = b2 * st.v[i] + (1.0f - b2) * g[i] * g[i];
            w[i] -= step_size * st.m[i] / (std::sqrt(st.v[i] * inv_bc2) + eps);
        }
    }
}

double clip_grad_norm(const std::vector<std::pair<std::string, Var>>& params, double max_norm) {
    double sq = 0;
    for (const auto& [_, v] : params)
        for (float g : v.grad().storage()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm) {
        const auto s = static_cast<float>(max_norm / (norm + 1e-12));
        for (const auto& [_, v] : params) {
            Var p = v;
            for (float& g : p.mutable_grad().storage()) g *= s;
        }
    }
    return norm;
}

// ---------------------------------------------------------------- stages

std::string TrainStage::label() const {
    switch (kind) {
        case StageKind::BaseVG: return "BASE_VG";
        case StageKind::CamOperator: return "CAM_OPERATOR(" + motion_name(motion.value()) + ")";
        case StageKind::AdaControl: return "ADA_CONTROL";
    }
    return "?";
}

TrainStage TrainStage::parse(const std::string& label) {
    if (label == "BASE_VG") return base();
    if (label == "ADA_CONTROL") return ada();
    const std::string prefix = "CAM_OPERATOR(";
    if (label.rfind(prefix, 0) == 0 && label.back() == ')') {
        const auto m = parse_basic_motion(label.substr(prefix.size(), label.size() - prefix.size() - 1));
        if (m) return cam(*m);
    }
    throw ParameterError("unknown stage label '" + label + "'");
}

bool TrainStage::trainable(const std::string& name) const {
    const bool is_pool = name.rfind("pool.", 0) == 0;
    const bool is_ctl = name.rfind("ctl.", 0) == 0;
    switch (kind) {
        case StageKind::BaseVG: return !is_pool && !is_ctl;
        case StageKind::CamOperator: return name.rfind("pool." + motion_name(motion.value()) + ".", 0) == 0;
        case StageKind::AdaControl: return is_ctl;
    }
    return false;
}

// ---------------------------------------------------------------- model bundle

ModelConfig ModelConfig::desk() {
    ModelConfig c;
    c.codec = "box:s3";
    c.unet.in_channels = 3;
    c.unet.base_width = 32;
    c.unet.channel_mults = {1, 2, 2};
    c.unet.groups = 8;
    c.unet.text_dim = 32;
    c.unet.context_len = 8;
    c.unet.resolution = 16;
    c.frames = 8;
    return c;
}

int64_t ModelConfig::pixel_resolution() const { return unet.resolution * make_codec(codec)->downscale(); }

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"unet", c.unet},
         {"codec", c.codec},
         {"T", c.T},
         {"schedule_kind", schedule_kind_name(c.schedule_kind)},
         {"beta_min", c.beta_min},
         {"beta_max", c.beta_max},
         {"lora_rank", c.lora_rank},
         {"frames", c.frames},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.unet = j.at("unet").get<UNetConfig>();
    c.codec = j.at("codec").get<std::string>();
    c.T = j.at("T").get<int64_t>();
    c.schedule_kind = parse_schedule_kind(j.at("schedule_kind").get<std::string>());
    c.beta_min = j.at("beta_min").get<double>();
    c.beta_max = j.at("beta_max").get<double>();
    c.lora_rank = j.at("lora_rank").get<int64_t>();
    c.frames = j.at("frames").get<int64_t>();
    c.seed = j.at("seed").get<uint64_t>();
}

ModelBundle ModelBundle::create(const ModelConfig& config, std::vector<std::string> vocabulary) {
    ModelBundle b;
    b.config = config;
    b.codec = make_codec(config.codec);
    if (b.codec->latent_channels() != config.unet.in_channels)
        throw ParameterError("codec " + b.codec->name() + " yields " + std::to_string(b.codec->latent_channels()) +
                             " latent channels but the network expects " + std::to_string(config.unet.in_channels));
    if (config.unet.max_timestep < config.T) throw ParameterError("network timestep range is shorter than T");
    b.schedule = build_schedule(config.T, config.schedule_kind, config.beta_min, config.beta_max);
    b.net = std::make_unique<DenoiserNet>(config.unet, std::move(vocabulary), derive_seed(config.seed, 1));
    b.pool.initialize_all(*b.net, derive_seed(config.seed, 2), config.lora_rank);
    return b;
}

nn::ParamSet ModelBundle::all_parameters() const {
    nn::ParamSet ps = net->parameters();
    const nn::ParamSet pool_params = pool.parameters();
    for (const auto& [name, v] : pool_params.items()) ps.add(name, v);
    if (control) {
        const nn::ParamSet ctl_params = control->parameters();
        for (const auto& [name, v] : ctl_params.items()) ps.add(name, v);
    }
    return ps;
}

ControlEncoder& ModelBundle::ensure_control() {
    if (!control) control = std::make_unique<ControlEncoder>(*net, derive_seed(config.seed, 3));
    return *control;
}

std::map<std::string, Tensor> ModelBundle::snapshot() const {
    std::map<std::string, Tensor> out;
    const nn::ParamSet ps = all_parameters();
    for (const auto& [name, v] : ps.items()) out.emplace(name, v.value());
    return out;
}

// ---------------------------------------------------------------- training loop

void check_prerequisites(const ModelBundle& bundle, const TrainStage& stage) {
    if (stage.kind == StageKind::BaseVG) return;
    if (!bundle.base_trained) throw StagingError(stage.label() + " requires a trained BASE_VG checkpoint");
    if (stage.kind == StageKind::AdaControl)
        for (BasicMotion m : kBasicMotions)
            if (!bundle.trained_motions.count(m))
                throw StagingError("ADA_CONTROL requires CAM_OPERATOR(" + motion_name(m) + ")");
}

namespace {

void check_dataset(const ModelBundle& bundle, const TrainStage& stage, const ClipDataset& dataset) {
    if (dataset.clips.empty()) throw DataError("training dataset is empty");
    const int64_t res = bundle.config.pixel_resolution();
    for (size_t i = 0; i < dataset.clips.size(); ++i) {
        const auto& c = dataset.clips[i].clip;
        if (c.height() != res || c.width() != res || c.num_frames() != dataset.clips[0].clip.num_frames())
            throw DimensionError("clip " + std::to_string(i) + " is " + shape_str(c.frames.shape()) +
                                 "; expected frames of " + std::to_string(res) + "x" + std::to_string(res));
    }
    if (stage.kind == StageKind::CamOperator) {
        std::vector<std::string> offending;
        for (size_t i = 0; i < dataset.clips.size(); ++i)
            if (!(dataset.clips[i].motion == MotionPattern(*stage.motion)))
                offending.push_back(std::to_string(i) + ":" + dataset.clips[i].motion.name());
        if (!offending.empty()) {
            std::string list;
            for (size_t i = 0; i < offending.size() && i < 10; ++i) list += (i ? ", " : "") + offending[i];
            if (offending.size() > 10) list += ", ...";
            throw DataError(std::to_string(offending.size()) + " clip(s) not labeled " + motion_name(*stage.motion) +
                            ": " + list);
        }
    }
}

}  // namespace

Checkpoint train_stage(ModelBundle& bundle, const TrainStage& stage, const ClipDataset& dataset,
                       const TrainConfig& config) {
    check_prerequisites(bundle, stage);
    check_dataset(bundle, stage, dataset);
    if (config.batch_size < 1 || config.epochs < 1) throw ParameterError("batch size and epochs must be >= 1");
    if (stage.kind == StageKind::AdaControl) bundle.ensure_control();

    const nn::ParamSet params = bundle.all_parameters();
    std::vector<std::pair<std::string, Var>> trainable;
    for (const auto& [name, v] : params.items()) {
        Var p = v;
        const bool on = stage.trainable(name);
        p.set_requires_grad(on);
        p.zero_grad();
        if (on) trainable.emplace_back(name, v);
    }
    struct RestoreGrad {
        const nn::ParamSet& ps;
        ~RestoreGrad() {
            for (const auto& [_, v] : ps.items()) {
                Var p = v;
                p.set_requires_grad(true);
                p.zero_grad();
            }
        }
    } restore{params};

    const DenoiserNet& net = *bundle.net;
    const LatentCodec& codec = *bundle.codec;
    std::optional<MotionOverlay> overlay;
    if (stage.kind == StageKind::CamOperator) overlay = build_overlay(bundle.pool, *stage.motion);
    const double dropout = stage.kind == StageKind::BaseVG ? config.text_dropout : 0.0;

    Adam adam(config.lr);
    Rng rng(config.seed);
    const auto n = static_cast<int64_t>(dataset.clips.size());
    int64_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    if (config.max_steps_per_epoch > 0) steps_per_epoch = std::min(steps_per_epoch, config.max_steps_per_epoch);

    Checkpoint ckpt;
    ckpt.stage = stage.label();
    ckpt.seed = config.seed;
    int64_t global_step = 0;
    for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<int64_t> order(static_cast<size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(config.seed, static_cast<uint64_t>(epoch) + 1000));
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        double epoch_loss = 0;
        for (int64_t s = 0; s < steps_per_epoch; ++s, ++global_step) {
            std::vector<const VideoClip*> clips;
            for (int64_t k = s * config.batch_size; k < std::min(n, (s + 1) * config.batch_size); ++k)
                clips.push_back(&dataset.clips[static_cast<size_t>(order[static_cast<size_t>(k)])].clip);
            const LatentVideo z0 = codec.encode_batch(clips);
            std::vector<int64_t> ts;
            std::vector<Var> text_rows;
            for (const VideoClip* c : clips) {
                ts.push_back(rng.randint(1, bundle.schedule.T));
                const bool drop = dropout > 0 && rng.uniform_double() < dropout;
                text_rows.push_back(drop ? net.text_embedder().null_var() : net.text_embedder().embed_var(c->meta.caption));
            }
            std::optional<ControlResiduals> control;
            if (stage.kind == StageKind::AdaControl) {
                const int64_t b = static_cast<int64_t>(clips.size());
                Tensor cond(Shape{b, z0.channels(), z0.height(), z0.width()});
                const int64_t per = z0.channels() * z0.height() * z0.width();
                for (int64_t i = 0; i < b; ++i) {
                    const Tensor first = codec.encode_frame(clips[static_cast<size_t>(i)]->frame(0));
                    std::copy_n(first.data(), per, cond.data() + i * per);
                }
                control = bundle.control->forward(ag::constant(std::move(cond)), ts);
            }
            Var loss = training_loss(net, z0, ts, stack_text(text_rows), control ? &*control : nullptr,
                                     overlay ? &*overlay : nullptr, bundle.schedule, rng, global_step);
            epoch_loss += loss.value()[0];
            ag::backward(loss);
            if (config.grad_clip > 0) clip_grad_norm(trainable, config.grad_clip);
            adam.step(trainable);
            for (auto& [_, v] : trainable) v.zero_grad();
        }
        const double mean = epoch_loss / static_cast<double>(steps_per_epoch);
        ckpt.loss_history.push_back(mean);
        if (config.on_epoch) config.on_epoch(epoch + 1, mean);
    }

    switch (stage.kind) {
        case StageKind::BaseVG: bundle.base_trained = true; break;
        case StageKind::CamOperator: bundle.trained_motions.insert(*stage.motion); break;
        case StageKind::AdaControl: bundle.control_trained = true; break;
    }
    for (const auto& [name, v] : trainable) ckpt.tensors.emplace(name, v.value());
    ckpt.meta = {{"model", bundle.config}, {"vocabulary", net.text_embedder().vocabulary()}, {"lr", config.lr},
                 {"epochs", config.epochs}, {"batch_size", config.batch_size}, {"clips", n}};
    return ckpt;
}

Checkpoint train_base(ModelBundle& bundle, const ClipDataset& dataset, const TrainConfig& config) {
    return train_stage(bundle, TrainStage::base(), dataset, config);
}

std::vector<LoraAdapter> train_cam_operator(ModelBundle& bundle, BasicMotion motion, const ClipDataset& dataset,
                                            const TrainConfig& config, Checkpoint* checkpoint) {
    Checkpoint ckpt = train_stage(bundle, TrainStage::cam(motion), dataset, config);
    if (checkpoint) *checkpoint = std::move(ckpt);
    return bundle.pool.adapters(motion);
}

Checkpoint train_adacontrolnet(ModelBundle& bundle, const ClipDataset& dataset, const TrainConfig& config) {
    return train_stage(bundle, TrainStage::ada(), dataset, config);
}

// ---------------------------------------------------------------- persistence

ModelPaths ModelPaths::under(const std::filesystem::path& dir) { return {dir / "base", dir / "pool", dir / "control"}; }

void save_stage(const ModelBundle& bundle, const TrainStage& stage, const Checkpoint& checkpoint,
                const ModelPaths& paths) {
    switch (stage.kind) {
        case StageKind::BaseVG: save_checkpoint(checkpoint, paths.base); break;
        case StageKind::AdaControl: save_checkpoint(checkpoint, paths.control); break;
        case StageKind::CamOperator: {
            CamOperatorPool trained;
            for (BasicMotion m : bundle.trained_motions) trained.set(m, bundle.pool.adapters(m));
            save_pool(trained, paths.pool);
            break;
        }
    }
}

namespace {

void assign_tensors(const nn::ParamSet& params, const std::map<std::string, Tensor>& tensors, const std::string& what) {
    for (const auto& [name, v] : params.items()) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw IntegrityError(what + " checkpoint lacks tensor " + name);
        if (it->second.shape() != v.shape()) throw IntegrityError(what + " checkpoint tensor " + name + " has wrong shape");
        Var p = v;
        p.mutable_value() = it->second;
    }
}

}  // namespace

ModelBundle load_bundle(const ModelPaths& paths) {
    if (!checkpoint_exists(paths.base)) throw StagingError("missing BASE_VG checkpoint at " + paths.base.string());
    const Checkpoint base = load_checkpoint(paths.base);
    if (base.stage != "BASE_VG") throw IntegrityError(paths.base.string() + " holds stage " + base.stage);
    ModelBundle bundle = ModelBundle::create(base.meta.at("model").get<ModelConfig>(),
                                             base.meta.at("vocabulary").get<std::vector<std::string>>());
    assign_tensors(bundle.net->parameters(), base.tensors, "BASE_VG");
    bundle.base_trained = true;
    if (std::filesystem::exists(paths.pool / "manifest.json")) {
        const CamOperatorPool loaded = load_pool(paths.pool);
        for (BasicMotion m : loaded.motions()) {
            const auto& ads = loaded.adapters(m);
            const auto& fresh = bundle.pool.adapters(m);
            if (ads.size() != fresh.size()) throw CompatibilityError("pool adapters for " + motion_name(m) + " do not match the network");
            for (size_t i = 0; i < ads.size(); ++i)
                if (ads[i].target != fresh[i].target || ads[i].a.shape() != fresh[i].a.shape() ||
                    ads[i].b.shape() != fresh[i].b.shape())
                    throw CompatibilityError("pool adapter " + ads[i].target + " does not match the network");
            bundle.pool.set(m, ads);
            bundle.trained_motions.insert(m);
        }
    }
    if (checkpoint_exists(paths.control)) {
        const Checkpoint ctl = load_checkpoint(paths.control);
        assign_tensors(bundle.ensure_control().parameters(), ctl.tensors, "ADA_CONTROL");
        bundle.control_trained = true;
    }
    return bundle;
}

}  // namespace mcam
