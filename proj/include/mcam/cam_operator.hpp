#pragma once

// Per-motion low-rank adapters on the temporal attention projections, the
// motion pool, and attach/detach through non-destructive weight overlays.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mcam/motion.hpp"
#include "mcam/video_unet.hpp"

namespace mcam {

inline constexpr const char* kPoolVersion = "mcam-pool/1";
inline constexpr int64_t kDefaultLoraRank = 4;

// Delta s * A * B^T on one temporal projection.
struct LoraAdapter {
    std::string target;  // projection id, e.g. "enc.0.temporal.q"
    int64_t rank = 0;
    float scale = 1.0f;
    Var a;  // [out, r]
    Var b;  // [in, r]

    Tensor delta() const;
};

class CamOperatorPool {
public:
    std::string version = kPoolVersion;

    // Fresh adapters for every temporal projection of `net`: A ~ U(-1/sqrt(r), 1/sqrt(r)), B = 0.
    // scale <= 0 selects 1/r.
    void initialize(const DenoiserNet& net, BasicMotion motion, uint64_t seed, int64_t rank = kDefaultLoraRank,
                    float scale = 0.0f);
    void initialize_all(const DenoiserNet& net, uint64_t seed, int64_t rank = kDefaultLoraRank);

    bool has(BasicMotion m) const { return entries_.count(m) != 0; }
    bool complete() const;
    std::vector<BasicMotion> motions() const;
    const std::vector<LoraAdapter>& adapters(BasicMotion m) const;
    std::vector<LoraAdapter>& adapters(BasicMotion m);
    void set(BasicMotion m, std::vector<LoraAdapter> adapters);
    void erase(BasicMotion m) { entries_.erase(m); }

    // "pool.<Motion>.<target>.a|b"
    nn::ParamSet parameters(BasicMotion m) const;
    nn::ParamSet parameters() const;
    // Deep copy; the clone shares no tensors with this pool.
    CamOperatorPool clone() const;

private:
    std::map<BasicMotion, std::vector<LoraAdapter>> entries_;
};

// Overlay realizing W + sum_i w_i * s * A_i B_i^T for the basics of `motion`.
// Static yields an empty overlay. Throws PoolError naming a missing pattern.
MotionOverlay build_overlay(const CamOperatorPool& pool, const MotionPattern& motion);

// Base net plus an overlay; the base weights are never touched.
class AttachedNet {
public:
    AttachedNet(const DenoiserNet& net, MotionOverlay overlay, MotionPattern motion)
        : net_(&net), overlay_(std::move(overlay)), motion_(std::move(motion)) {}

    const DenoiserNet& net() const { return *net_; }
    const MotionOverlay& overlay() const { return overlay_; }
    const MotionPattern& motion() const { return motion_; }
    Tensor denoise(const Tensor& z_t, int64_t t, const TextEmbedding& text,
                   const ControlResiduals* control = nullptr) const;

private:
    const DenoiserNet* net_;
    MotionOverlay overlay_;
    MotionPattern motion_;
};

AttachedNet attach(const DenoiserNet& net, const CamOperatorPool& pool, const MotionPattern& motion);
const DenoiserNet& detach(const AttachedNet& handle);

void save_pool(const CamOperatorPool& pool, const std::filesystem::path& dir);
CamOperatorPool load_pool(const std::filesystem::path& dir);

}  // namespace mcam
