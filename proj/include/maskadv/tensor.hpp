#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace maskadv {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles. Images are stored as (H, W, C).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& vec() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Reinterpret with a new shape of equal size.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws InputError unless a and b have identical shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Image geometry helpers for (H, W, C) tensors; a rank-2 tensor is treated as C = 1.
struct ImageDims {
  std::size_t height;
  std::size_t width;
  std::size_t channels;

  std::size_t pixels() const noexcept { return height * width; }
};

ImageDims image_dims(const Shape& shape);

}  // namespace maskadv
