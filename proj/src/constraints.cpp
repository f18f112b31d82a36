#include "maskadv/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maskadv/errors.hpp"

namespace maskadv {

MaskConstraint::MaskConstraint(Tensor eps) : eps_(std::move(eps)) {
  for (double e : eps_.values())
    if (!(e >= 0.0) || !std::isfinite(e)) throw InputError("mask constraint entries must be finite and >= 0");
}

MaskConstraint MaskConstraint::scaled(double factor, double cap) const {
  Tensor out = eps_;
  for (double& e : out.values()) e = std::min(e * factor, cap);
  return MaskConstraint(std::move(out));
}

std::size_t MaskConstraint::active_pixels() const {
  const ImageDims dims = image_dims(eps_.shape());
  std::size_t n = 0;
  for (std::size_t p = 0; p < dims.pixels(); ++p) {
    for (std::size_t c = 0; c < dims.channels; ++c) {
      if (eps_[p * dims.channels + c] > 0.0) {
        ++n;
        break;
      }
    }
  }
  return n;
}

RegionMask::RegionMask(Tensor omega) : omega_(std::move(omega)) {
  if (omega_.rank() != 2) throw InputError("region mask must be (H, W)");
  for (double v : omega_.values())
    if (v != 0.0 && v != 1.0) throw InputError("region mask values must be 0 or 1");
}

RegionMask RegionMask::rectangle(std::size_t height, std::size_t width, std::size_t top,
                                 std::size_t left, std::size_t h, std::size_t w) {
  if (top + h > height || left + w > width) throw InputError("rectangle exceeds the image");
  Tensor omega({height, width}, 0.0);
  for (std::size_t y = top; y < top + h; ++y)
    for (std::size_t x = left; x < left + w; ++x) omega[y * width + x] = 1.0;
  return RegionMask(std::move(omega));
}

RegionMask RegionMask::full(std::size_t height, std::size_t width) {
  return RegionMask(Tensor({height, width}, 1.0));
}

std::size_t RegionMask::count() const {
  return std::size_t(std::count(omega_.values().begin(), omega_.values().end(), 1.0));
}

bool FeasibleBox::contains(const Tensor& x, double tol) const {
  if (x.shape() != lower.shape()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] < lower[i] - tol || x[i] > upper[i] + tol) return false;
  return true;
}

FeasibleBox feasible_box(const Tensor& x0, const MaskConstraint& mask, InputRange range) {
  require_same_shape(x0, mask.eps(), "feasible_box");
  FeasibleBox box{x0, x0};
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double e = mask.eps()[i];
    box.lower[i] = std::max(range.lo, x0[i] - e);
    box.upper[i] = std::min(range.hi, x0[i] + e);
    // x0 outside the valid range still yields a non-empty interval.
    if (box.lower[i] > box.upper[i]) box.lower[i] = box.upper[i] = std::clamp(x0[i], range.lo, range.hi);
  }
  return box;
}

Tensor clip(const Tensor& x, const FeasibleBox& box) {
  require_same_shape(x, box.lower, "clip");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], box.lower[i], box.upper[i]);
  return out;
}

MaskConstraint uniform_mask(const Shape& image_shape, double eps) {
  if (!(eps >= 0.0)) throw InputError("eps must be >= 0");
  return MaskConstraint(Tensor(image_shape, eps));
}

MaskConstraint region_to_mask(const RegionMask& region, const Shape& image_shape, double eps) {
  if (!(eps >= 0.0)) throw InputError("eps must be >= 0");
  const ImageDims dims = image_dims(image_shape);
  if (region.height() != dims.height || region.width() != dims.width)
    throw InputError("region " + shape_to_string(region.omega().shape()) + " does not match image " +
                     shape_to_string(image_shape));
  Tensor out(image_shape, 0.0);
  for (std::size_t p = 0; p < dims.pixels(); ++p)
    if (region.contains(p))
      for (std::size_t c = 0; c < dims.channels; ++c) out[p * dims.channels + c] = eps;
  return MaskConstraint(std::move(out));
}

std::size_t ratio_pixel_count(double ratio, std::size_t d) {
  if (!(ratio > 0.0) || !std::isfinite(ratio)) throw InputError("ratio must be > 0");
  const double n = ratio < 1.0 ? std::floor(ratio * double(d)) : std::round(ratio);
  if (n < 1.0) throw InputError("ratio selects no pixels");
  if (n > double(d))
    throw InputError("ratio selects " + std::to_string(std::size_t(n)) + " pixels but the image has " +
                     std::to_string(d));
  return std::size_t(n);
}

MaskConstraint ratio_to_mask(const Tensor& x0, const Tensor& importance, double ratio, double eps) {
  if (!(eps >= 0.0)) throw InputError("eps must be >= 0");
  const ImageDims dims = image_dims(x0.shape());
  if (importance.shape() != Shape{dims.height, dims.width})
    throw InputError("importance map must be (H, W) matching the image");
  const std::size_t n = ratio_pixel_count(ratio, dims.pixels());

  std::vector<std::size_t> order(dims.pixels());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
  Tensor out(x0.shape(), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < dims.channels; ++c) out[order[i] * dims.channels + c] = eps;
  return MaskConstraint(std::move(out));
}

}  // namespace maskadv
