#include "maskadv/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "maskadv/errors.hpp"

namespace maskadv {

namespace {

// Population stddev from pairwise differences, so equal values give exactly 0.
double stddev3(double a, double b, double c) {
  return std::sqrt(((a - b) * (a - b) + (b - c) * (b - c) + (a - c) * (a - c)) / 9.0);
}

// Start of the 3-wide window around i on an axis of length n.
std::size_t window_start(std::size_t i, std::size_t n) {
  if (i == 0) return 0;
  if (i + 1 >= n) return n - 3;
  return i - 1;
}

// Prefix sums of an (H, W) field with a zero row/column in front.
std::vector<double> integral_image(const Tensor& field, std::size_t H, std::size_t W) {
  std::vector<double> s((H + 1) * (W + 1), 0.0);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      s[(y + 1) * (W + 1) + x + 1] =
          field[y * W + x] + s[y * (W + 1) + x + 1] + s[(y + 1) * (W + 1) + x] - s[y * (W + 1) + x];
  return s;
}

std::vector<RegionScore> all_windows(const ImportanceMap& imp, std::size_t h, std::size_t w) {
  const auto& shape = imp.importance.shape();
  if (shape.size() != 2) throw InputError("importance map must be (H, W)");
  const std::size_t H = shape[0], W = shape[1];
  if (h == 0 || w == 0) throw InputError("window must be at least 1x1");
  if (h > H || w > W) throw InputError("window larger than the image");
  const auto s = integral_image(imp.corrected(), H, W);
  std::vector<RegionScore> out;
  out.reserve((H - h + 1) * (W - w + 1));
  for (std::size_t y = 0; y + h <= H; ++y) {
    for (std::size_t x = 0; x + w <= W; ++x) {
      const double sum = s[(y + h) * (W + 1) + x + w] - s[y * (W + 1) + x + w] -
                         s[(y + h) * (W + 1) + x] + s[y * (W + 1) + x];
      out.push_back({y, x, h, w, sum, std::nullopt});
    }
  }
  return out;
}

}  // namespace

Tensor variance_map(const Tensor& x) {
  const ImageDims dims = image_dims(x.shape());
  if (dims.height < 3 || dims.width < 3) throw InputError("variance map needs an image of at least 3x3 pixels");
  const std::size_t H = dims.height, W = dims.width, C = dims.channels;
  Tensor sigma(x.shape(), 0.0);
  auto at = [&](std::size_t y, std::size_t xx, std::size_t c) { return x[(y * W + xx) * C + c]; };
  for (std::size_t y = 0; y < H; ++y) {
    const std::size_t ys = window_start(y, H);
    for (std::size_t xx = 0; xx < W; ++xx) {
      const std::size_t xs = window_start(xx, W);
      for (std::size_t c = 0; c < C; ++c) {
        const double sx = stddev3(at(y, xs, c), at(y, xs + 1, c), at(y, xs + 2, c));
        const double sy = stddev3(at(ys, xx, c), at(ys + 1, xx, c), at(ys + 2, xx, c));
        sigma[(y * W + xx) * C + c] = std::min(sx, sy);
      }
    }
  }
  return sigma;
}

MaskConstraint imperceptible_mask(const Tensor& x) {
  return MaskConstraint(variance_map(x));
}

Tensor integrated_gradients(const NetworkModel& model, const Tensor& x, const Tensor& baseline,
                            std::size_t k, std::size_t m) {
  require_same_shape(x, baseline, "integrated_gradients");
  if (m == 0) throw InputError("integrated gradients needs at least one step");
  if (k >= model.num_classes()) throw InputError("class index out of range");
  Tensor total(x.shape(), 0.0);
  Tensor point(x.shape(), 0.0);
  for (std::size_t j = 1; j <= m; ++j) {
    const double alpha = double(j) / double(m);
    for (std::size_t i = 0; i < x.size(); ++i) point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
    const Tensor g = input_gradient(model, point, k);
    for (std::size_t i = 0; i < x.size(); ++i) total[i] += g[i];
  }
  for (std::size_t i = 0; i < x.size(); ++i) total[i] = (x[i] - baseline[i]) * total[i] / double(m);
  return total;
}

Tensor black_baseline(const NetworkModel& model) {
  return Tensor(model.input_shape(), model.input_range().lo);
}

Tensor ImportanceMap::corrected() const {
  require_same_shape(importance, beta, "importance map");
  Tensor out = importance;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= beta[i];
  return out;
}

Tensor correction_coefficient(const Tensor& x, InputRange range) {
  const ImageDims dims = image_dims(x.shape());
  Tensor beta({dims.height, dims.width}, 0.0);
  for (std::size_t p = 0; p < dims.pixels(); ++p) {
    double v = 0.0;
    for (std::size_t c = 0; c < dims.channels; ++c) v += x[p * dims.channels + c];
    v = (v / double(dims.channels) - range.lo) / range.width();
    v = std::clamp(v, 0.0, 1.0);
    beta[p] = 0.5 + std::min(v, 1.0 - v);
  }
  return beta;
}

ImportanceMap smoothgrad(const NetworkModel& model, const Tensor& x, const Tensor& baseline,
                         const SmoothGradConfig& cfg) {
  if (cfg.samples == 0) throw InputError("smoothgrad needs at least one sample");
  const double sigma = cfg.sigma.value_or(0.1 * model.input_range().width());
  if (!(sigma >= 0.0)) throw InputError("smoothgrad sigma must be >= 0");
  const std::size_t k = cfg.target.value_or(forward(model, x).predicted_label);
  const ImageDims dims = image_dims(x.shape());

  Tensor mean(x.shape(), 0.0);
  Tensor noisy = x;
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    std::seed_seq seq{std::uint32_t(cfg.seed), std::uint32_t(cfg.seed >> 32), std::uint32_t(s),
                      std::uint32_t(std::uint64_t(s) >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) noisy[i] = x[i] + sigma * noise(rng);
    const Tensor ig = integrated_gradients(model, noisy, baseline, k, cfg.ig_steps);
    for (std::size_t i = 0; i < x.size(); ++i) mean[i] += ig[i];
  }

  ImportanceMap out{Tensor({dims.height, dims.width}, 0.0), correction_coefficient(x, model.input_range())};
  for (std::size_t p = 0; p < dims.pixels(); ++p) {
    double acc = 0.0;
    for (std::size_t c = 0; c < dims.channels; ++c)
      acc += std::abs(mean[p * dims.channels + c] / double(cfg.samples));
    out.importance[p] = acc;
  }
  return out;
}

double region_vulnerability(const ImportanceMap& imp, const RegionMask& omega) {
  require_same_shape(imp.importance, omega.omega(), "region_vulnerability");
  const Tensor corrected = imp.corrected();
  double s = 0.0;
  for (std::size_t i = 0; i < corrected.size(); ++i) s += corrected[i] * omega.omega()[i];
  return s;
}

RegionMask RegionScore::to_mask(std::size_t image_height, std::size_t image_width) const {
  return RegionMask::rectangle(image_height, image_width, top, left, height, width);
}

RegionScore best_rectangle(const ImportanceMap& imp, std::size_t h, std::size_t w) {
  const auto windows = all_windows(imp, h, w);
  std::size_t best = 0;
  for (std::size_t i = 1; i < windows.size(); ++i)
    if (windows[i].score > windows[best].score) best = i;
  return windows[best];
}

std::vector<RegionScore> topk_rectangles(const ImportanceMap& imp, std::size_t h, std::size_t w,
                                         std::size_t k) {
  if (k == 0) throw InputError("top-k needs k >= 1");
  auto windows = all_windows(imp, h, w);
  if (k > windows.size()) {
    std::cerr << "warning: top-k requested " << k << " windows, only " << windows.size()
              << " placements exist; clamping\n";
    k = windows.size();
  }
  // Windows are generated in (top, left) order, so a stable sort keeps corner tie-breaks.
  std::stable_sort(windows.begin(), windows.end(),
                   [](const RegionScore& a, const RegionScore& b) { return a.score > b.score; });
  windows.resize(k);
  return windows;
}

}  // namespace maskadv
