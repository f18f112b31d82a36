#pragma once

#include "maskadv/network.hpp"
#include "maskadv/tensor.hpp"

namespace maskadv {

/// Per-pixel-per-channel bound on the absolute perturbation. A zero entry
/// freezes that value of the image.
class MaskConstraint {
 public:
  explicit MaskConstraint(Tensor eps);

  const Tensor& eps() const noexcept { return eps_; }
  const Shape& shape() const noexcept { return eps_.shape(); }

  // Multiply every bound by factor, capping at cap.
  MaskConstraint scaled(double factor, double cap) const;

  // Number of pixels (channel-collapsed) with a non-zero bound in any channel.
  std::size_t active_pixels() const;

  friend bool operator==(const MaskConstraint&, const MaskConstraint&) = default;

 private:
  Tensor eps_;
};

/// Binary (H, W) region; 1 marks pixels that may be perturbed.
class RegionMask {
 public:
  explicit RegionMask(Tensor omega);

  // Axis-aligned rectangle with top-left corner (top, left).
  static RegionMask rectangle(std::size_t height, std::size_t width, std::size_t top,
                              std::size_t left, std::size_t h, std::size_t w);
  static RegionMask full(std::size_t height, std::size_t width);

  const Tensor& omega() const noexcept { return omega_; }
  std::size_t height() const noexcept { return omega_.shape()[0]; }
  std::size_t width() const noexcept { return omega_.shape()[1]; }
  std::size_t count() const;
  bool contains(std::size_t pixel) const { return omega_[pixel] != 0.0; }

 private:
  Tensor omega_;
};

struct FeasibleBox {
  Tensor lower;
  Tensor upper;

  bool contains(const Tensor& x, double tol = 0.0) const;
};

// lower = max(lo, x0 - eps), upper = min(hi, x0 + eps).
FeasibleBox feasible_box(const Tensor& x0, const MaskConstraint& mask, InputRange range);

// Elementwise median(lower, x, upper).
Tensor clip(const Tensor& x, const FeasibleBox& box);

MaskConstraint uniform_mask(const Shape& image_shape, double eps);

MaskConstraint region_to_mask(const RegionMask& region, const Shape& image_shape, double eps);

// Number of pixels a --ratio value selects out of d: floor(ratio * d) for
// ratio < 1, round(ratio) otherwise.
std::size_t ratio_pixel_count(double ratio, std::size_t d);

// Unmasks the n most important pixels (ties by lowest index). importance is (H, W).
MaskConstraint ratio_to_mask(const Tensor& x0, const Tensor& importance, double ratio, double eps);

}  // namespace maskadv
