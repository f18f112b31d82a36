#include "maskadv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "maskadv/errors.hpp"

namespace maskadv {

LpNorms lp_norms(const Tensor& delta) {
  LpNorms n;
  double sq = 0.0;
  for (double v : delta.values()) {
    const double a = std::abs(v);
    if (a > 1e-12) n.l0 += 1.0;
    n.l1 += a;
    sq += a * a;
    n.linf = std::max(n.linf, a);
  }
  n.l2 = std::sqrt(sq);
  return n;
}

double ssim(const Tensor& x, const Tensor& y, double dynamic_range) {
  require_same_shape(x, y, "ssim");
  if (!(dynamic_range > 0.0)) throw InputError("ssim dynamic range must be > 0");
  const ImageDims dims = x.rank() >= 2 ? image_dims(x.shape()) : ImageDims{1, x.size(), 1};
  const double c1 = std::pow(0.01 * dynamic_range, 2);
  const double c2 = std::pow(0.03 * dynamic_range, 2);
  const std::size_t n = dims.pixels();
  const std::size_t C = dims.channels;

  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    double mx = 0.0, my = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      mx += x[p * C + c];
      my += y[p * C + c];
    }
    mx /= double(n);
    my /= double(n);
    double vx = 0.0, vy = 0.0, cxy = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      const double dx = x[p * C + c] - mx;
      const double dy = y[p * C + c] - my;
      vx += dx * dx;
      vy += dy * dy;
      cxy += dx * dy;
    }
    vx /= double(n);
    vy /= double(n);
    cxy /= double(n);
    total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
  }
  return total / double(C);
}

Lab srgb_to_lab(double r, double g, double b) {
  auto linear = [](double u) {
    return u <= 0.04045 ? u / 12.92 : std::pow((u + 0.055) / 1.055, 2.4);
  };
  const double R = linear(r), G = linear(g), B = linear(b);
  const double X = 0.4124564 * R + 0.3575761 * G + 0.1804375 * B;
  const double Y = 0.2126729 * R + 0.7151522 * G + 0.0721750 * B;
  const double Z = 0.0193339 * R + 0.1191920 * G + 0.9503041 * B;
  constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;
  constexpr double eps = 216.0 / 24389.0;  // (6/29)^3
  constexpr double kappa = 24389.0 / 27.0;
  auto f = [&](double t) { return t > eps ? std::cbrt(t) : (kappa * t + 16.0) / 116.0; };
  const double fx = f(X / xn), fy = f(Y / yn), fz = f(Z / zn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

double delta_e2000(const Lab& p, const Lab& q) {
  auto deg = [](double rad) { return rad * 180.0 / std::numbers::pi; };
  auto rad = [](double d) { return d * std::numbers::pi / 180.0; };

  const double c1 = std::hypot(p.a, p.b);
  const double c2 = std::hypot(q.a, q.b);
  const double cbar7 = std::pow(0.5 * (c1 + c2), 7);
  const double G = 0.5 * (1.0 - std::sqrt(cbar7 / (cbar7 + std::pow(25.0, 7))));
  const double a1 = (1.0 + G) * p.a;
  const double a2 = (1.0 + G) * q.a;
  const double cp1 = std::hypot(a1, p.b);
  const double cp2 = std::hypot(a2, q.b);

  auto hue = [&](double a, double b) {
    if (a == 0.0 && b == 0.0) return 0.0;
    double h = deg(std::atan2(b, a));
    return h < 0.0 ? h + 360.0 : h;
  };
  const double h1 = hue(a1, p.b);
  const double h2 = hue(a2, q.b);

  const double dL = q.L - p.L;
  const double dC = cp2 - cp1;
  double dh = 0.0;
  if (cp1 * cp2 != 0.0) {
    dh = h2 - h1;
    if (dh > 180.0) dh -= 360.0;
    else if (dh < -180.0) dh += 360.0;
  }
  const double dH = 2.0 * std::sqrt(cp1 * cp2) * std::sin(rad(dh) / 2.0);

  const double Lbar = 0.5 * (p.L + q.L);
  const double Cbar = 0.5 * (cp1 + cp2);
  double hbar = h1 + h2;
  if (cp1 * cp2 != 0.0) {
    if (std::abs(h1 - h2) <= 180.0) hbar = 0.5 * (h1 + h2);
    else if (h1 + h2 < 360.0) hbar = 0.5 * (h1 + h2 + 360.0);
    else hbar = 0.5 * (h1 + h2 - 360.0);
  }
  const double T = 1.0 - 0.17 * std::cos(rad(hbar - 30.0)) + 0.24 * std::cos(rad(2.0 * hbar)) +
                   0.32 * std::cos(rad(3.0 * hbar + 6.0)) - 0.20 * std::cos(rad(4.0 * hbar - 63.0));
  const double dtheta = 30.0 * std::exp(-std::pow((hbar - 275.0) / 25.0, 2));
  const double cbar_p7 = std::pow(Cbar, 7);
  const double Rc = 2.0 * std::sqrt(cbar_p7 / (cbar_p7 + std::pow(25.0, 7)));
  const double l50 = (Lbar - 50.0) * (Lbar - 50.0);
  const double SL = 1.0 + 0.015 * l50 / std::sqrt(20.0 + l50);
  const double SC = 1.0 + 0.045 * Cbar;
  const double SH = 1.0 + 0.015 * Cbar * T;
  const double RT = -std::sin(2.0 * rad(dtheta)) * Rc;

  const double tl = dL / SL, tc = dC / SC, th = dH / SH;
  return std::sqrt(tl * tl + tc * tc + th * th + RT * tc * th);
}

double ciede2000(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "ciede2000");
  const ImageDims dims = image_dims(x.shape());
  if (dims.channels != 3) throw InputError("ciede2000 needs 3-channel images");
  double total = 0.0;
  for (std::size_t p = 0; p < dims.pixels(); ++p) {
    const Lab a = srgb_to_lab(x[3 * p], x[3 * p + 1], x[3 * p + 2]);
    const Lab b = srgb_to_lab(y[3 * p], y[3 * p + 1], y[3 * p + 2]);
    total += delta_e2000(a, b);
  }
  return total;
}

MetricReport measure(const Tensor& x0, const Tensor& x, double lo, double hi) {
  require_same_shape(x0, x, "measure");
  Tensor delta = x;
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= x0[i];
  MetricReport r;
  r.norms = lp_norms(delta);
  r.ssim = ssim(x0, x, hi - lo);
  if (x0.rank() == 3 && x0.shape()[2] == 3) {
    Tensor a = x0, b = x;
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = (a[i] - lo) / (hi - lo);
      b[i] = (b[i] - lo) / (hi - lo);
    }
    r.ciede2000_total = ciede2000(a, b);
  }
  return r;
}

}  // namespace maskadv
