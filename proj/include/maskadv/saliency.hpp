#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "maskadv/constraints.hpp"
#include "maskadv/network.hpp"

namespace maskadv {

/// Local standard deviation per pixel and channel: the population stddev of
/// the 3-pixel window along each axis (shifted inward at the border), then
/// the smaller of the two axis values.
Tensor variance_map(const Tensor& x);

// Mask constraint with eps equal to the variance map.
MaskConstraint imperceptible_mask(const Tensor& x);

// Riemann approximation with m right-endpoint samples of the path integral
// of grad f_k along baseline -> x, scaled by (x - baseline).
Tensor integrated_gradients(const NetworkModel& model, const Tensor& x, const Tensor& baseline,
                            std::size_t k, std::size_t m);

// All-lo image of the model's input shape.
Tensor black_baseline(const NetworkModel& model);

struct ImportanceMap {
  Tensor importance;  // (H, W), channel-aggregated
  Tensor beta;        // (H, W), 0.5 + min(v, 1 - v) on [0, 1]-normalised values

  // beta * importance, elementwise.
  Tensor corrected() const;
};

Tensor correction_coefficient(const Tensor& x, InputRange range);

struct SmoothGradConfig {
  std::size_t ig_steps = 64;
  std::size_t samples = 8;
  std::optional<double> sigma;         // default 0.1 * range width
  std::optional<std::size_t> target;   // default: predicted class at x
  std::uint64_t seed = 0;
};

/// Averages integrated gradients over noisy copies x + N(0, sigma^2) and
/// aggregates channels by summed absolute value. Sample s draws from an RNG
/// seeded with (seed, s) so results do not depend on evaluation order.
ImportanceMap smoothgrad(const NetworkModel& model, const Tensor& x, const Tensor& baseline,
                         const SmoothGradConfig& cfg);

double region_vulnerability(const ImportanceMap& imp, const RegionMask& omega);

struct RegionScore {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  double score = 0.0;
  std::optional<double> robust_radius;

  RegionMask to_mask(std::size_t image_height, std::size_t image_width) const;
};

// Exact argmax of the corrected importance summed over every h x w window,
// ties to the smallest (top, left).
RegionScore best_rectangle(const ImportanceMap& imp, std::size_t h, std::size_t w);

// The k best windows in descending score (ties by corner). k larger than the
// number of placements is clamped, with a warning on stderr.
std::vector<RegionScore> topk_rectangles(const ImportanceMap& imp, std::size_t h, std::size_t w,
                                         std::size_t k);

}  // namespace maskadv
