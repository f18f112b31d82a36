#pragma once

#include <optional>
#include <vector>

#include "maskadv/constraints.hpp"
#include "maskadv/network.hpp"

namespace maskadv {

struct DeepFoolConfig {
  std::size_t max_iter = 50;
  double overshoot = 0.02;
  bool adaptive = false;
  double loosen_rate = 1.2;
  std::size_t loosen_interval = 10;

  void validate() const;
};

struct DeepFoolTrace {
  std::size_t iterations = 0;
  std::vector<std::size_t> chosen_classes;
  double constraint_scale = 1.0;  // product of the loosening factors applied
  bool success = false;
  bool stalled = false;  // stopped early: every gradient vanished on the movable values
};

struct DeepFoolStep {
  std::size_t target = 0;  // class whose linearised boundary is closest
  Tensor delta;
};

// One L-infinity DeepFool step away from original_label. When box is given,
// a gradient entry counts toward the norm and the sign step only if the box
// leaves room to move that value in the entry's direction. Frozen values
// (eps == 0) and values pinned at a box face therefore drop out, and the
// linearised step is spent on values that can actually move.
DeepFoolStep deepfool_step(const NetworkModel& model, const Tensor& x, std::size_t original_label,
                           const FeasibleBox* box = nullptr);

struct DeepFoolResult {
  std::optional<Tensor> adversarial;
  DeepFoolTrace trace;
  MaskConstraint final_constraint;
};

/// Masked DeepFool. Every iterate is clipped into the feasible box of the
/// current constraint; with cfg.adaptive the constraint is scaled by
/// loosen_rate every loosen_interval iterations (capped at the range width).
/// When true_label is given and the clean prediction already differs from
/// it, x0 is returned as a zero-perturbation success.
DeepFoolResult deepfool_attack(const NetworkModel& model, const Tensor& x0, const MaskConstraint& mask,
                               const DeepFoolConfig& cfg,
                               std::optional<std::size_t> true_label = std::nullopt);

}  // namespace maskadv
