#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "maskadv/bb.hpp"
#include "maskadv/deepfool.hpp"
#include "maskadv/metrics.hpp"
#include "maskadv/saliency.hpp"

namespace maskadv {

struct UniformSource {
  double eps = 0.0;
};

struct RegionSource {
  RegionMask region;
  double eps = 0.0;
};

// Unmask the ratio-selected most important pixels (by corrected SmoothGrad
// importance) with bound eps; eps defaults to the range width.
struct RatioSource {
  double ratio = 0.0;
  std::optional<double> eps;
};

// eps = local variance map, optionally loosened during DeepFool.
struct ImperceptibleSource {
  bool adaptive = true;
};

using ConstraintSource = std::variant<UniformSource, RegionSource, RatioSource, ImperceptibleSource>;

std::string constraint_kind(const ConstraintSource& source);

struct AttackRequest {
  std::shared_ptr<const NetworkModel> model;
  Tensor x0;
  ConstraintSource constraint;
  DeepFoolConfig deepfool;
  BBConfig bb;
  SmoothGradConfig saliency;  // used by the ratio source; its seed is overridden by `seed`
  std::uint64_t seed = 0;
  std::optional<std::size_t> true_label;
};

struct AttackResult {
  explicit AttackResult(MaskConstraint constraint)
      : initial_constraint(constraint), final_constraint(std::move(constraint)) {}

  bool success = false;
  std::size_t original_label = 0;
  std::optional<std::size_t> adversarial_label;
  std::optional<Tensor> adversarial;
  std::optional<Tensor> delta;
  std::optional<MetricReport> metrics;  // of delta; empty on failure
  std::optional<double> preliminary_linf;  // DeepFool-only distance
  DeepFoolTrace deepfool;
  std::optional<BBTrace> bb;
  MaskConstraint initial_constraint;
  MaskConstraint final_constraint;
  nlohmann::json constraint_params;
  std::string constraint_kind;
  std::uint64_t seed = 0;
  double wall_ms = 0.0;
  double deepfool_ms = 0.0;
  double bb_ms = 0.0;
};

// Checks the request without running anything; throws InputError.
void validate_request(const AttackRequest& req);

/// DeepFool under the requested constraint, then the boundary walk from its
/// preliminary point under the final (possibly loosened) constraint. A
/// DeepFool failure ends the attack with no adversarial image.
AttackResult run_attack(const AttackRequest& req);

struct RadiusConfig {
  DeepFoolConfig deepfool;
  BBConfig bb;
};

// L-infinity norm of the attack restricted to region with eps = range width,
// or the range width itself when no adversarial example is found.
double estimate_robust_radius(const NetworkModel& model, const Tensor& x0, const RegionMask& region,
                              const RadiusConfig& cfg);

// Measures the robust radius of each top-k window; the result keeps the
// top-k order with robust_radius filled in.
std::vector<RegionScore> refine_topk(const NetworkModel& model, const Tensor& x0, const ImportanceMap& imp,
                                     std::size_t h, std::size_t w, std::size_t k, const RadiusConfig& cfg);

// Candidate with the smallest measured radius (first on ties).
const RegionScore& most_vulnerable(const std::vector<RegionScore>& measured);

/// Report document. Only deterministic fields go in; wall_ms is written as
/// null so identical requests give byte-identical reports (timings are kept
/// in AttackResult and written separately).
nlohmann::json make_report(const AttackResult& result);

std::string report_text(const AttackResult& result);

}  // namespace maskadv
