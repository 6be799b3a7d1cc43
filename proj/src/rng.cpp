#include "mcam/rng.hpp"

namespace mcam {

Tensor Rng::normal_tensor(Shape shape, float std) {
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = normal() * std;
    return t;
}

Tensor Rng::uniform_tensor(Shape shape, float lo, float hi) {
    Tensor t(std::move(shape));
    for (auto& v : t.storage()) v = uniform(lo, hi);
    return t;
}

}  // namespace mcam
