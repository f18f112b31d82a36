#pragma once

#include <vector>

#include "maskadv/constraints.hpp"
#include "maskadv/network.hpp"

namespace maskadv {

struct BBConfig {
  std::size_t steps = 100;
  std::size_t binary_search_steps = 10;
  double trust_radius = 1.0;  // bound on the squared L2 norm of one step
  std::size_t decay_interval = 20;
  double decay_factor = 0.5;
  // Target for the linearised margin: a non-adversarial iterate aims
  // overshoot times past the boundary, an adversarial one stops 1/overshoot
  // of the way back, so iterates tend to stay adversarial.
  double overshoot = 1.1;

  void validate() const;
};

struct BBTrace {
  std::size_t steps = 0;
  double start_distance = 0.0;  // L-infinity distance of x_start
  std::vector<double> best_distance;  // best adversarial distance after each step
  std::size_t improvements = 0;
  std::size_t fallback_steps = 0;  // steps where the boundary constraint was infeasible
};

struct BBResult {
  Tensor adversarial;
  BBTrace trace;
};

// Bisects the segment [x0, x_adv] for `steps` iterations and returns the
// adversarial end of the final bracket.
Tensor boundary_search(const NetworkModel& model, const Tensor& x0, const Tensor& x_adv,
                       const FeasibleBox& box, std::size_t steps);

struct SubproblemSolution {
  Tensor delta;
  bool feasible = true;  // false: best-effort minimiser of |b.delta - c|
};

/// Solves
///   argmin_delta ||x0 - (x_cur + delta)||_inf
///   s.t. x_cur + delta in box, b.delta = c, ||delta||_2^2 <= r.
/// Bisects on the objective value t; for a fixed t the box shrinks to
/// |x_cur + delta - x0| <= t and feasibility reduces to the minimum-norm
/// point on the hyperplane inside that box, delta_i = clamp(nu * b_i),
/// with nu found exactly from the piecewise-linear dual. If no t admits a
/// solution, returns the box- and radius-feasible delta closest to the
/// hyperplane.
SubproblemSolution solve_linf_subproblem(const Tensor& x0, const Tensor& x_cur, const Tensor& b, double c,
                                         const FeasibleBox& box, double r);

// Walks along the decision boundary from x_start, minimising the
// L-infinity distance to x0 inside the mask's feasible box. Never returns
// anything worse than x_start.
BBResult bb_optimize(const NetworkModel& model, const Tensor& x0, const Tensor& x_start,
                     const MaskConstraint& mask, const BBConfig& cfg);

}  // namespace maskadv
