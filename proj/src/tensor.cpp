#include "mcam/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "mcam/errors.hpp"

namespace mcam {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
        throw DimensionError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                             shape_str(shape_));
}

Tensor Tensor::reshaped(Shape shape) const {
    Tensor t = *this;
    t.reshape_inplace(std::move(shape));
    return t;
}

void Tensor::reshape_inplace(Shape shape) {
    if (shape_numel(shape) != numel())
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    shape_ = std::move(shape);
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

float Tensor::max_abs() const {
    float m = 0.0f;
    for (float v : data_) m = std::max(m, std::fabs(v));
    return m;
}

double Tensor::sum() const {
    double s = 0.0;
    for (float v : data_) s += v;
    return s;
}

double Tensor::mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }

bool Tensor::bitwise_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

namespace {
void require_same(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}
}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same(a, b, "add");
    Tensor out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same(a, b, "sub");
    Tensor out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b[i];
    return out;
}

Tensor operator*(const Tensor& a, float s) {
    Tensor out = a;
    for (auto& v : out.storage()) v *= s;
    return out;
}

void axpy_inplace(Tensor& y, float a, const Tensor& x) {
    require_same(y, x, "axpy");
    for (int64_t i = 0; i < y.numel(); ++i) y[i] += a * x[i];
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same(a, b, "max_abs_diff");
    float m = 0.0f;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

double mean_abs_diff(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mean_abs_diff");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += std::fabs(static_cast<double>(a[i]) - b[i]);
    return a.numel() ? s / static_cast<double>(a.numel()) : 0.0;
}

}  // namespace mcam
