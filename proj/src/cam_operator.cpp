#include "mcam/cam_operator.hpp"

#include <cmath>

#include "mcam/errors.hpp"
#include "mcam/tensor_io.hpp"

namespace mcam {

Tensor LoraAdapter::delta() const {
    ag::NoGradGuard guard;
    return ag::scale(ag::linear(a, b), scale).value();
}

void CamOperatorPool::initialize(const DenoiserNet& net, BasicMotion motion, uint64_t seed, int64_t rank,
                                 float scale) {
    if (rank < 1) throw ParameterError("LoRA rank must be >= 1");
    if (scale <= 0.0f) scale = 1.0f / static_cast<float>(rank);
    Rng rng(derive_seed(seed, static_cast<uint64_t>(motion) + 1));
    const float bound = 1.0f / std::sqrt(static_cast<float>(rank));
    std::vector<LoraAdapter> adapters;
    for (const TemporalLayer* layer : net.temporal_layers()) {
        for (const auto& pid : layer->projection_ids()) {
            const Tensor& w = layer->projection(pid).weight.value();
            const int64_t out = w.dim(0), in = w.dim(1);
            if (rank > std::min(in, out)) throw ParameterError("LoRA rank exceeds projection size for " + pid);
            LoraAdapter ad;
            ad.target = pid;
            ad.rank = rank;
            ad.scale = scale;
            ad.a = nn::make_param(rng.uniform_tensor({out, rank}, -bound, bound));
            ad.b = nn::make_param(Tensor(Shape{in, rank}));
            adapters.push_back(std::move(ad));
        }
    }
    entries_[motion] = std::move(adapters);
}

void CamOperatorPool::initialize_all(const DenoiserNet& net, uint64_t seed, int64_t rank) {
    for (BasicMotion m : kBasicMotions) initialize(net, m, seed, rank);
}

bool CamOperatorPool::complete() const {
    for (BasicMotion m : kBasicMotions)
        if (!has(m)) return false;
    return true;
}

std::vector<BasicMotion> CamOperatorPool::motions() const {
    std::vector<BasicMotion> out;
    for (const auto& [m, _] : entries_) out.push_back(m);
    return out;
}

const std::vector<LoraAdapter>& CamOperatorPool::adapters(BasicMotion m) const {
    auto it = entries_.find(m);
    if (it == entries_.end()) throw PoolError("pattern " + motion_name(m) + " missing from the CamOperator pool");
    return it->second;
}

std::vector<LoraAdapter>& CamOperatorPool::adapters(BasicMotion m) {
    auto it = entries_.find(m);
    if (it == entries_.end()) throw PoolError("pattern " + motion_name(m) + " missing from the CamOperator pool");
    return it->second;
}

void CamOperatorPool::set(BasicMotion m, std::vector<LoraAdapter> adapters) {
    if (adapters.empty()) throw PoolError("empty adapter set for " + motion_name(m));
    for (const auto& ad : adapters)
        if (ad.rank != adapters.front().rank) throw PoolError("adapters of " + motion_name(m) + " disagree on rank");
    entries_[m] = std::move(adapters);
}

nn::ParamSet CamOperatorPool::parameters(BasicMotion m) const {
    nn::ParamSet out;
    for (const auto& ad : adapters(m)) {
        const std::string prefix = "pool." + motion_name(m) + "." + ad.target;
        out.add(prefix + ".a", ad.a);
        out.add(prefix + ".b", ad.b);
    }
    return out;
}

nn::ParamSet CamOperatorPool::parameters() const {
    nn::ParamSet out;
    for (const auto& [m, _] : entries_) {
        const nn::ParamSet ps = parameters(m);
        for (const auto& [name, v] : ps.items()) out.add(name, v);
    }
    return out;
}

CamOperatorPool CamOperatorPool::clone() const {
    CamOperatorPool copy;
    copy.version = version;
    for (const auto& [m, ads] : entries_) {
        std::vector<LoraAdapter> dup;
        for (const auto& ad : ads) {
            LoraAdapter d = ad;
            d.a = nn::make_param(ad.a.value());
            d.b = nn::make_param(ad.b.value());
            dup.push_back(std::move(d));
        }
        copy.entries_[m] = std::move(dup);
    }
    return copy;
}

MotionOverlay build_overlay(const CamOperatorPool& pool, const MotionPattern& motion) {
    MotionOverlay overlay;
    for (const auto& [m, weight] : motion.entries()) {
        for (const auto& ad : pool.adapters(m)) {
            LoraTerm term;
            term.a = ad.a;
            term.b = ad.b;
            term.scale = ad.scale * weight;
            overlay.terms[ad.target].push_back(std::move(term));
        }
    }
    return overlay;
}

Tensor AttachedNet::denoise(const Tensor& z_t, int64_t t, const TextEmbedding& text,
                            const ControlResiduals* control) const {
    return mcam::denoise(*net_, z_t, t, text, control, overlay_.empty() ? nullptr : &overlay_);
}

AttachedNet attach(const DenoiserNet& net, const CamOperatorPool& pool, const MotionPattern& motion) {
    return AttachedNet(net, build_overlay(pool, motion), motion);
}

const DenoiserNet& detach(const AttachedNet& handle) { return handle.net(); }

void save_pool(const CamOperatorPool& pool, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json patterns = nlohmann::json::object();
    for (BasicMotion m : pool.motions()) {
        const std::string name = motion_name(m);
        fs::create_directories(dir / name);
        nlohmann::json adapters = nlohmann::json::array();
        for (const auto& ad : pool.adapters(m)) {
            const std::string a_file = name + "/" + ad.target + ".a.bin";
            const std::string b_file = name + "/" + ad.target + ".b.bin";
            write_tensor(dir / a_file, ad.a.value());
            write_tensor(dir / b_file, ad.b.value());
            adapters.push_back({{"target", ad.target},
                                {"rank", ad.rank},
                                {"scale", ad.scale},
                                {"a", a_file},
                                {"b", b_file},
                                {"a_shape", ad.a.shape()},
                                {"b_shape", ad.b.shape()}});
        }
        patterns[name] = {{"adapters", adapters}};
    }
    write_json_file(dir / "manifest.json", {{"format", pool.version}, {"patterns", patterns}});
}

CamOperatorPool load_pool(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir / "manifest.json")) throw PoolError("no pool manifest in " + dir.string());
    const auto manifest = read_json_file(dir / "manifest.json");
    const std::string version = manifest.value("format", "");
    if (version != kPoolVersion)
        throw CompatibilityError("pool version '" + version + "' is incompatible with " + kPoolVersion);
    CamOperatorPool pool;
    pool.version = version;
    for (const auto& [name, entry] : manifest.at("patterns").items()) {
        const auto m = parse_basic_motion(name);
        if (!m) throw PoolError("pool manifest names unknown pattern '" + name + "'");
        std::vector<LoraAdapter> adapters;
        for (const auto& j : entry.at("adapters")) {
            const fs::path a_file = dir / j.at("a").get<std::string>();
            const fs::path b_file = dir / j.at("b").get<std::string>();
            if (!fs::exists(a_file) || !fs::exists(b_file))
                throw PoolError("pattern " + name + " is missing adapter data for " + j.at("target").get<std::string>());
            LoraAdapter ad;
            ad.target = j.at("target").get<std::string>();
            ad.rank = j.at("rank").get<int64_t>();
            ad.scale = j.at("scale").get<float>();
            ad.a = nn::make_param(read_tensor(a_file));
            ad.b = nn::make_param(read_tensor(b_file));
            if (ad.a.shape() != j.at("a_shape").get<Shape>() || ad.b.shape() != j.at("b_shape").get<Shape>())
                throw IntegrityError("pattern " + name + " adapter " + ad.target + " shape disagrees with manifest");
            adapters.push_back(std::move(ad));
        }
        pool.set(*m, std::move(adapters));
    }
    return pool;
}

}  // namespace mcam
