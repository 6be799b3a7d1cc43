#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mcam {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major float32 tensor with value semantics.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
    static Tensor scalar(float v) { return Tensor(Shape{1}, v); }

    const Shape& shape() const noexcept { return shape_; }
    int64_t dim(size_t i) const { return shape_.at(i); }
    size_t rank() const noexcept { return shape_.size(); }
    int64_t numel() const noexcept { return static_cast<int64_t>(data_.size()); }
    bool empty() const noexcept { return data_.empty(); }

    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }
    std::span<float> span() noexcept { return data_; }
    std::span<const float> span() const noexcept { return data_; }
    std::vector<float>& storage() noexcept { return data_; }
    const std::vector<float>& storage() const noexcept { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // Same data, new shape; numel must match.
    Tensor reshaped(Shape shape) const;
    void reshape_inplace(Shape shape);

    void fill(float v);
    bool all_finite() const;
    float max_abs() const;
    double sum() const;
    double mean() const;

    // Exact equality of shape and every bit of the payload.
    bool bitwise_equal(const Tensor& other) const;

private:
    Shape shape_;
    std::vector<float> data_;
};

// Elementwise helpers on plain tensors (no autograd).
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, float s);
void axpy_inplace(Tensor& y, float a, const Tensor& x);
float max_abs_diff(const Tensor& a, const Tensor& b);
double mean_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace mcam
