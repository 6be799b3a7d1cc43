#pragma once

#include <cstdint>
#include <random>

#include "mcam/tensor.hpp"

namespace mcam {

// splitmix64 finalizer; used to derive independent child seeds.
constexpr uint64_t mix_seed(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr uint64_t derive_seed(uint64_t parent, uint64_t index) { return mix_seed(mix_seed(parent) ^ (index * 0xd6e8feb86659fd93ULL)); }

class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(mix_seed(seed)) {}

    float uniform() { return std::uniform_real_distribution<float>(0.0f, 1.0f)(engine_); }
    double uniform_double() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }
    float normal() { return normal_(engine_); }
    // Inclusive range.
    int64_t randint(int64_t lo, int64_t hi) { return std::uniform_int_distribution<int64_t>(lo, hi)(engine_); }
    uint64_t next_u64() { return engine_(); }

    Tensor normal_tensor(Shape shape, float std = 1.0f);
    Tensor uniform_tensor(Shape shape, float lo, float hi);

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<float> normal_{0.0f, 1.0f};
};

}  // namespace mcam
