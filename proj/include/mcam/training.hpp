#pragma once

// Staged optimization: BASE_VG -> CAM_OPERATOR(m) for each motion -> ADA_CONTROL.
// A ModelBundle owns every trainable component; each stage trains one disjoint
// slice of its parameters and leaves the rest bitwise untouched.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mcam/ada_controlnet.hpp"
#include "mcam/cam_operator.hpp"
#include "mcam/diffusion.hpp"
#include "mcam/motion_sim.hpp"
#include "mcam/tensor_io.hpp"

namespace mcam {

class Adam {
public:
    explicit Adam(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    // Updates every named parameter from its accumulated gradient. lr == 0 leaves them untouched.
    void step(const std::vector<std::pair<std::string, Var>>& params);
    int64_t steps() const { return t_; }

private:
    struct Moments {
        Tensor m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::map<std::string, Moments> state_;
};

// Rescales gradients so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(const std::vector<std::pair<std::string, Var>>& params, double max_norm);

enum class StageKind { BaseVG, CamOperator, AdaControl };

struct TrainStage {
    StageKind kind = StageKind::BaseVG;
    std::optional<BasicMotion> motion;

    static TrainStage base() { return {StageKind::BaseVG, std::nullopt}; }
    static TrainStage cam(BasicMotion m) { return {StageKind::CamOperator, m}; }
    static TrainStage ada() { return {StageKind::AdaControl, std::nullopt}; }
    static TrainStage parse(const std::string& label);

    std::string label() const;
    bool trainable(const std::string& param_name) const;
    bool frozen(const std::string& param_name) const { return !trainable(param_name); }
};

struct ModelConfig {
    UNetConfig unet;  // unet.resolution is the latent spatial size
    std::string codec = "identity";
    int64_t T = 1000;
    ScheduleKind schedule_kind = ScheduleKind::Linear;
    double beta_min = 1e-4, beta_max = 2e-2;
    int64_t lora_rank = kDefaultLoraRank;
    int64_t frames = 16;
    uint64_t seed = 0;

    // 48x48 pixels, f = 8, 3x box codec; sized for single-core training.
    static ModelConfig desk();
    int64_t pixel_resolution() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Stage budgets for the desk configuration.
struct DeskRecipe {
    int64_t base_clips_per_motion = 34;
    int64_t base_epochs = 60;
    int64_t cam_epochs = 30;
    int64_t control_epochs = 5;
    double lr = 1e-3;
};

struct ModelBundle {
    ModelConfig config;
    std::shared_ptr<const LatentCodec> codec;
    NoiseSchedule schedule;
    std::unique_ptr<DenoiserNet> net;
    CamOperatorPool pool;  // fresh adapters for every motion until trained
    std::unique_ptr<ControlEncoder> control;
    bool base_trained = false;
    std::set<BasicMotion> trained_motions;
    bool control_trained = false;

    static ModelBundle create(const ModelConfig& config, std::vector<std::string> vocabulary = caption_vocabulary());

    // Every parameter of every component under its stage namespace.
    nn::ParamSet all_parameters() const;
    // Builds the control branch from the current denoiser encoder if absent.
    ControlEncoder& ensure_control();
    std::map<std::string, Tensor> snapshot() const;
};

struct TrainConfig {
    double lr = 1e-4;
    int64_t epochs = 1;
    int64_t batch_size = 4;
    uint64_t seed = 0;
    double grad_clip = 1.0;
    double text_dropout = 0.1;  // BASE_VG only: share of captions replaced by the null embedding
    int64_t max_steps_per_epoch = 0;  // 0 = full pass
    std::function<void(int64_t epoch, double mean_loss)> on_epoch;
};

// Runs one stage over `dataset` and returns its checkpoint (stage tensors + per-epoch loss history).
Checkpoint train_stage(ModelBundle& bundle, const TrainStage& stage, const ClipDataset& dataset,
                       const TrainConfig& config);

// Checks stage ordering; throws StagingError naming the first missing prerequisite.
void check_prerequisites(const ModelBundle& bundle, const TrainStage& stage);

// Stage-specific entry points.
Checkpoint train_base(ModelBundle& bundle, const ClipDataset& dataset, const TrainConfig& config);
std::vector<LoraAdapter> train_cam_operator(ModelBundle& bundle, BasicMotion motion, const ClipDataset& dataset,
                                            const TrainConfig& config, Checkpoint* checkpoint = nullptr);
Checkpoint train_adacontrolnet(ModelBundle& bundle, const ClipDataset& dataset, const TrainConfig& config);

// On-disk model layout: <dir>/base, <dir>/pool, <dir>/control.
struct ModelPaths {
    std::filesystem::path base, pool, control;
    static ModelPaths under(const std::filesystem::path& dir);
};

void save_stage(const ModelBundle& bundle, const TrainStage& stage, const Checkpoint& checkpoint, const ModelPaths& paths);
// Loads whatever stages exist. Throws StagingError when the base checkpoint is missing.
ModelBundle load_bundle(const ModelPaths& paths);

}  // namespace mcam
