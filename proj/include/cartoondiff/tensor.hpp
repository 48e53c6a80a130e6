#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cartoondiff/error.hpp"

namespace cartoondiff {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape);

/// Dense row-major array. Value semantic: copies are deep and operations
/// return new tensors rather than mutating their inputs.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill)
    { }

    Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data))
    {
        if (shape_numel(shape_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * shape_[1], shape_[1]); }
    std::span<const T> row(std::size_t r) const
    {
        return std::span<const T>(data_).subspan(r * shape_[1], shape_[1]);
    }

    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }

    /// Same data under a new shape with equal element count.
    Tensor reshaped(Shape shape) const
    {
        return Tensor(std::move(shape), data_);
    }

    bool all_finite() const
    {
        for (T v : data_) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
        return true;
    }

    /// Throws NonFiniteError naming `where` if any element is NaN or Inf.
    const Tensor& ensure_finite(std::string_view where) const
    {
        if (!all_finite()) {
            throw NonFiniteError("non-finite value produced by " + std::string(where));
        }
        return *this;
    }

    template <typename U>
    Tensor<U> cast() const
    {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b)
    {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

/// C x H x W image or noise state.
using ImageTensor = Tensor<float>;

inline void require_same_shape(const Shape& a, const Shape& b, std::string_view op)
{
    if (a != b) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    }
}

}  // namespace cartoondiff
