#include "maskadv/deepfool.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "maskadv/errors.hpp"

namespace maskadv {

namespace {
constexpr double kDegenerateNorm = 1e-12;
}

void DeepFoolConfig::validate() const {
  if (max_iter == 0) throw InputError("deepfool max_iter must be positive");
  if (!(overshoot >= 0.0)) throw InputError("deepfool overshoot must be >= 0");
  if (adaptive) {
    if (!(loosen_rate > 1.0)) throw InputError("loosen rate must be > 1");
    if (loosen_interval == 0) throw InputError("loosen interval must be positive");
  }
}

DeepFoolStep deepfool_step(const NetworkModel& model, const Tensor& x, std::size_t original_label,
                           const FeasibleBox* box) {
  const std::size_t K = model.num_classes();
  if (original_label >= K) throw InputError("original label out of range");
  if (box) {
    require_same_shape(x, box->lower, "deepfool_step");
    require_same_shape(x, box->upper, "deepfool_step");
  }
  // A value can take part in the step only if the box leaves room in the direction w pushes it.
  auto movable = [&](std::size_t i, double w) {
    if (!box) return true;
    return w > 0.0 ? x[i] < box->upper[i] : (w < 0.0 && x[i] > box->lower[i]);
  };
  const Jacobian jac = jacobian(model, x);
  const auto& f = jac.scores.values;
  const auto& g0 = jac.rows[original_label].values();

  std::size_t best = K;
  double best_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    if (k == original_label) continue;
    const auto& gk = jac.rows[k].values();
    double norm1 = 0.0;
    for (std::size_t i = 0; i < gk.size(); ++i)
      if (movable(i, gk[i] - g0[i])) norm1 += std::abs(gk[i] - g0[i]);
    if (norm1 < kDegenerateNorm) continue;
    const double ratio = std::abs(f[k] - f[original_label]) / norm1;
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best = k;
    }
  }
  if (best == K) throw NumericError("deepfool: every score-difference gradient vanishes (flat region)");

  DeepFoolStep step{best, Tensor(x.shape(), 0.0)};
  const auto& gb = jac.rows[best].values();
  for (std::size_t i = 0; i < step.delta.size(); ++i) {
    const double w = movable(i, gb[i] - g0[i]) ? gb[i] - g0[i] : 0.0;
    step.delta[i] = w > 0.0 ? best_ratio : (w < 0.0 ? -best_ratio : 0.0);
  }
  return step;
}

DeepFoolResult deepfool_attack(const NetworkModel& model, const Tensor& x0, const MaskConstraint& mask,
                               const DeepFoolConfig& cfg, std::optional<std::size_t> true_label) {
  cfg.validate();
  require_same_shape(x0, mask.eps(), "deepfool_attack");
  const InputRange range = model.input_range();
  const std::size_t original = forward(model, x0).predicted_label;

  DeepFoolResult result{std::nullopt, {}, mask};
  if (true_label && *true_label != original) {
    result.adversarial = x0;
    result.trace.success = true;
    return result;
  }

  MaskConstraint current = mask;
  FeasibleBox box = feasible_box(x0, current, range);
  Tensor x = x0;
  std::size_t label = original;
  std::size_t i = 0;
  while (label == original && i < cfg.max_iter) {
    // Loosening only changes the box, so doing it before the step (rather
    // than between step and clip) lets the step see the room it will have.
    if (cfg.adaptive && i > 0 && i % cfg.loosen_interval == 0) {
      current = current.scaled(cfg.loosen_rate, range.width());
      result.trace.constraint_scale *= cfg.loosen_rate;
      box = feasible_box(x0, current, range);
    }
    DeepFoolStep step;
    try {
      step = deepfool_step(model, x, original, &box);
    } catch (const NumericError&) {
      // No class boundary reachable through the values that can still move.
      // Until the box changes every further iteration would stall the same
      // way, so an adaptive run skips ahead to its next loosening.
      const std::size_t next = (i / cfg.loosen_interval + 1) * cfg.loosen_interval;
      if (!cfg.adaptive || next >= cfg.max_iter) {
        result.trace.stalled = true;
        i = cfg.adaptive ? cfg.max_iter : i;
        break;
      }
      i = next;
      continue;
    }
    result.trace.chosen_classes.push_back(step.target);
    const double factor = 1.0 + cfg.overshoot;
    for (std::size_t j = 0; j < x.size(); ++j)
      x[j] = std::clamp(x[j] + factor * step.delta[j], box.lower[j], box.upper[j]);
    label = forward(model, x).predicted_label;
    ++i;
  }

  result.trace.iterations = i;
  result.final_constraint = std::move(current);
  if (label != original) {
    result.trace.success = true;
    result.adversarial = std::move(x);
  }
  return result;
}

}  // namespace maskadv
