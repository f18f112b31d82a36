#pragma once

#include <optional>

#include "maskadv/tensor.hpp"

namespace maskadv {

struct LpNorms {
  double l0 = 0.0;  // number of entries with |delta_i| > 1e-12
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

LpNorms lp_norms(const Tensor& delta);

// Whole-image SSIM per channel, averaged over channels. dynamic_range is L
// in C1 = (0.01 L)^2, C2 = (0.03 L)^2.
double ssim(const Tensor& x, const Tensor& y, double dynamic_range);

struct Lab {
  double L;
  double a;
  double b;
};

// sRGB in [0, 1] to CIE Lab under the D65 reference white.
Lab srgb_to_lab(double r, double g, double b);

// CIEDE2000 colour difference with k_L = k_C = k_H = 1.
double delta_e2000(const Lab& p, const Lab& q);

// Sum of per-pixel CIEDE2000 differences of two (H, W, 3) images in [0, 1].
double ciede2000(const Tensor& x, const Tensor& y);

struct MetricReport {
  LpNorms norms;
  double ssim = 1.0;
  std::optional<double> ciede2000_total;  // colour images only
};

// Metrics between clean x0 and adversarial x, both in the value range [lo, hi].
MetricReport measure(const Tensor& x0, const Tensor& x, double lo, double hi);

}  // namespace maskadv
