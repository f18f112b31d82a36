#include "maskadv/bb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "maskadv/errors.hpp"

namespace maskadv {

void BBConfig::validate() const {
  if (steps == 0) throw InputError("bb steps must be positive");
  if (binary_search_steps == 0) throw InputError("bb binary search steps must be positive");
  if (!(trust_radius > 0.0)) throw InputError("bb trust radius must be > 0");
  if (decay_interval == 0) throw InputError("bb decay interval must be positive");
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) throw InputError("bb decay factor must be in (0, 1)");
  if (!(overshoot >= 1.0)) throw InputError("bb overshoot must be >= 1");
}

namespace {

double linf_distance(const Tensor& a, const Tensor& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Minimum-norm points on {delta in [lo, hi], b.delta = target} for one set
// of coordinate intervals. g(nu) = sum_i b_i clamp(nu b_i, lo_i, hi_i) is
// continuous, piecewise linear and non-decreasing; its breakpoints are
// lo_i / b_i and hi_i / b_i.
class HyperplaneProjector {
 public:
  HyperplaneProjector(std::span<const double> b, std::span<const double> lo, std::span<const double> hi)
      : b_(b), lo_(lo), hi_(hi) {
    double scale = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      scale += std::abs(b[i]) * std::max(std::abs(lo[i]), std::abs(hi[i]));
      if (b[i] != 0.0) {
        breaks_.push_back(lo[i] / b[i]);
        breaks_.push_back(hi[i] / b[i]);
      }
    }
    std::sort(breaks_.begin(), breaks_.end());
    breaks_.erase(std::unique(breaks_.begin(), breaks_.end()), breaks_.end());
    tol_ = 1e-12 * (1.0 + scale);
  }

  double g(double nu) const {
    double s = 0.0;
    for (std::size_t i = 0; i < b_.size(); ++i) s += b_[i] * std::clamp(nu * b_[i], lo_[i], hi_[i]);
    return s;
  }

  double norm2(double nu) const {
    double s = 0.0;
    for (std::size_t i = 0; i < b_.size(); ++i) {
      const double d = std::clamp(nu * b_[i], lo_[i], hi_[i]);
      s += d * d;
    }
    return s;
  }

  double delta(std::size_t i, double nu) const { return std::clamp(nu * b_[i], lo_[i], hi_[i]); }

  double min_nu() const { return breaks_.empty() ? 0.0 : breaks_.front(); }
  double max_nu() const { return breaks_.empty() ? 0.0 : breaks_.back(); }

  // nu with g(nu) == target, or nullopt when target is outside g's range.
  std::optional<double> solve(double target) const {
    if (breaks_.empty()) {
      if (std::abs(target) <= tol_) return 0.0;
      return std::nullopt;
    }
    const double gmin = g(breaks_.front());
    const double gmax = g(breaks_.back());
    if (target < gmin - tol_ || target > gmax + tol_) return std::nullopt;
    if (target <= gmin) return breaks_.front();
    if (target >= gmax) return breaks_.back();
    std::size_t lo = 0, hi = breaks_.size() - 1;
    double glo = gmin, ghi = gmax;
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      const double gm = g(breaks_[mid]);
      if (gm <= target) {
        lo = mid;
        glo = gm;
      } else {
        hi = mid;
        ghi = gm;
      }
    }
    if (ghi == glo) return breaks_[lo];
    return breaks_[lo] + (target - glo) * (breaks_[hi] - breaks_[lo]) / (ghi - glo);
  }

 private:
  std::span<const double> b_, lo_, hi_;
  std::vector<double> breaks_;
  double tol_ = 0.0;
};

}  // namespace

Tensor boundary_search(const NetworkModel& model, const Tensor& x0, const Tensor& x_adv,
                       const FeasibleBox& box, std::size_t steps) {
  require_same_shape(x0, x_adv, "boundary_search");
  const std::size_t clean = forward(model, x0).predicted_label;
  if (forward(model, x_adv).predicted_label == clean)
    throw InputError("boundary_search: end point is not adversarial");

  double lo = 0.0, hi = 1.0;
  auto blend = [&](double a) {
    Tensor x = x0;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = x0[i] + a * (x_adv[i] - x0[i]);
    return clip(x, box);
  };
  Tensor best = clip(x_adv, box);
  for (std::size_t s = 0; s < steps; ++s) {
    const double mid = 0.5 * (lo + hi);
    Tensor x = blend(mid);
    if (forward(model, x).predicted_label != clean) {
      hi = mid;
      best = std::move(x);
    } else {
      lo = mid;
    }
  }
  return best;
}

SubproblemSolution solve_linf_subproblem(const Tensor& x0, const Tensor& x_cur, const Tensor& b, double c,
                                         const FeasibleBox& box, double r) {
  require_same_shape(x0, x_cur, "solve_linf_subproblem");
  require_same_shape(x0, b, "solve_linf_subproblem");
  require_same_shape(x0, box.lower, "solve_linf_subproblem");
  if (!(r > 0.0)) throw InputError("trust radius must be > 0");
  if (!b.all_finite() || !std::isfinite(c)) throw InputError("boundary normal and offset must be finite");

  const std::size_t d = x0.size();
  // Coordinates whose box is a single point are folded into constants.
  std::vector<std::size_t> free_idx;
  std::vector<double> fb, fA, fB, fp;
  Tensor delta(x0.shape(), 0.0);
  double fixed_g = 0.0, fixed_norm2 = 0.0, t_floor = 0.0;
  bool any_nonzero_b = false;
  for (std::size_t i = 0; i < d; ++i) {
    const double A = box.lower[i] - x_cur[i];
    const double B = box.upper[i] - x_cur[i];
    const double p = x0[i] - x_cur[i];
    if (b[i] != 0.0 && B > A) any_nonzero_b = true;
    if (B > A) {
      free_idx.push_back(i);
      fb.push_back(b[i]);
      fA.push_back(A);
      fB.push_back(B);
      fp.push_back(p);
      t_floor = std::max(t_floor, std::max({A - p, p - B, 0.0}));
    } else {
      delta[i] = A;
      fixed_g += b[i] * A;
      fixed_norm2 += A * A;
      t_floor = std::max(t_floor, std::abs(p - A));
    }
  }
  const double target = c - fixed_g;
  if (!any_nonzero_b && std::abs(target) > 1e-12 * (1.0 + std::abs(c)))
    throw SolverError("boundary normal vanishes on every movable coordinate but c != 0");

  const std::size_t n = free_idx.size();
  std::vector<double> lo(n), hi(n);
  auto set_level = [&](double t) {
    for (std::size_t j = 0; j < n; ++j) {
      lo[j] = std::max(fA[j], fp[j] - t);
      hi[j] = std::min(fB[j], fp[j] + t);
      if (lo[j] > hi[j]) lo[j] = hi[j] = std::clamp(fp[j], fA[j], fB[j]);
    }
  };
  // Returns the dual variable of a feasible point at level t.
  auto feasible_at = [&](double t) -> std::optional<double> {
    set_level(t);
    HyperplaneProjector proj(fb, lo, hi);
    auto nu = proj.solve(target);
    if (!nu) return std::nullopt;
    if (fixed_norm2 + proj.norm2(*nu) > r) return std::nullopt;
    return nu;
  };
  auto emit = [&](double t, double nu) {
    set_level(t);
    HyperplaneProjector proj(fb, lo, hi);
    for (std::size_t j = 0; j < n; ++j) delta[free_idx[j]] = proj.delta(j, nu);
  };

  double t_ceiling = t_floor;
  for (std::size_t j = 0; j < n; ++j)
    t_ceiling = std::max({t_ceiling, std::abs(fA[j] - fp[j]), std::abs(fB[j] - fp[j])});

  if (auto nu = feasible_at(t_floor)) {
    emit(t_floor, *nu);
    return {std::move(delta), true};
  }
  auto nu_hi = feasible_at(t_ceiling);
  if (!nu_hi) {
    // Best effort: walk the minimum-norm path toward the hyperplane until
    // the trust region is exhausted.
    set_level(t_ceiling);
    HyperplaneProjector proj(fb, lo, hi);
    double nu_cap;
    if (auto nu_c = proj.solve(target)) {
      nu_cap = *nu_c;
    } else {
      nu_cap = target > proj.g(0.0) ? proj.max_nu() : proj.min_nu();
    }
    double inside = 0.0, outside = nu_cap;
    if (fixed_norm2 + proj.norm2(nu_cap) <= r) {
      inside = nu_cap;
    } else {
      for (int it = 0; it < 200 && inside != outside; ++it) {
        const double mid = 0.5 * (inside + outside);
        if (mid == inside || mid == outside) break;
        if (fixed_norm2 + proj.norm2(mid) <= r) inside = mid;
        else outside = mid;
      }
    }
    for (std::size_t j = 0; j < n; ++j) delta[free_idx[j]] = proj.delta(j, inside);
    return {std::move(delta), false};
  }

  double t_lo = t_floor, t_hi = t_ceiling, nu_best = *nu_hi;
  for (int it = 0; it < 200; ++it) {
    if (t_hi - t_lo <= 1e-13 * std::max(1.0, t_hi)) break;
    const double mid = 0.5 * (t_lo + t_hi);
    if (auto nu = feasible_at(mid)) {
      t_hi = mid;
      nu_best = *nu;
    } else {
      t_lo = mid;
    }
  }
  emit(t_hi, nu_best);
  return {std::move(delta), true};
}

BBResult bb_optimize(const NetworkModel& model, const Tensor& x0, const Tensor& x_start,
                     const MaskConstraint& mask, const BBConfig& cfg) {
  cfg.validate();
  require_same_shape(x0, x_start, "bb_optimize");
  require_same_shape(x0, mask.eps(), "bb_optimize");
  const std::size_t y = forward(model, x0).predicted_label;
  if (forward(model, x_start).predicted_label == y)
    throw InputError("bb_optimize: starting point is not adversarial");

  const FeasibleBox box = feasible_box(x0, mask, model.input_range());
  const std::size_t K = model.num_classes();

  BBResult result{x_start, {}};
  result.trace.start_distance = linf_distance(x_start, x0);
  double best = result.trace.start_distance;

  Tensor x = boundary_search(model, x0, x_start, box, cfg.binary_search_steps);
  if (const double dist = linf_distance(x, x0); dist < best) {
    best = dist;
    result.adversarial = x;
    ++result.trace.improvements;
  }

  double radius = cfg.trust_radius;
  std::vector<double> weights(K, 0.0);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (step > 0 && step % cfg.decay_interval == 0) radius *= cfg.decay_factor;

    auto trace = detail::forward_trace(model, x);
    const auto& logits = trace.acts.back();
    const double mx = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double z : logits) lse += std::exp(z - mx);
    lse = mx + std::log(lse);
    std::size_t rival = y == 0 ? 1 : 0;
    for (std::size_t k = 0; k < K; ++k)
      if (k != y && logits[k] > logits[rival]) rival = k;
    // Log-softmax margin of the clean label over its strongest rival; <= 0 means adversarial.
    const double margin = (logits[y] - lse) - (logits[rival] - lse);

    std::fill(weights.begin(), weights.end(), 0.0);
    weights[y] = 1.0;
    weights[rival] = -1.0;
    Tensor normal(x.shape(), detail::backward(model, trace, weights));
    const double wanted = margin > 0.0 ? -cfg.overshoot * margin : -margin / cfg.overshoot;

    SubproblemSolution sol;
    try {
      sol = solve_linf_subproblem(x0, x, normal, wanted, box, radius);
    } catch (const SolverError&) {
      break;
    }
    if (!sol.feasible) ++result.trace.fallback_steps;
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = std::clamp(x[i] + sol.delta[i], box.lower[i], box.upper[i]);
    ++result.trace.steps;

    if (forward(model, x).predicted_label != y) {
      if (const double dist = linf_distance(x, x0); dist < best) {
        best = dist;
        result.adversarial = x;
        ++result.trace.improvements;
      }
    }
    result.trace.best_distance.push_back(best);
  }
  return result;
}

}  // namespace maskadv
