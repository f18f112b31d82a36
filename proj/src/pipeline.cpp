#include "maskadv/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "maskadv/errors.hpp"

namespace maskadv {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void check_eps(double eps, const InputRange& range) {
  if (!std::isfinite(eps) || eps < 0.0) throw InputError("eps must be a finite value >= 0");
  if (eps > range.width())
    throw InputError("eps " + std::to_string(eps) + " exceeds the input range width " +
                     std::to_string(range.width()));
}

struct BuiltConstraint {
  MaskConstraint mask;
  nlohmann::json params;
  bool adaptive = false;
};

BuiltConstraint build_constraint(const AttackRequest& req) {
  const NetworkModel& model = *req.model;
  const Shape& shape = req.x0.shape();
  return std::visit(
      overloaded{
          [&](const UniformSource& s) {
            return BuiltConstraint{uniform_mask(shape, s.eps), {{"eps", s.eps}}, false};
          },
          [&](const RegionSource& s) {
            return BuiltConstraint{region_to_mask(s.region, shape, s.eps),
                                   {{"eps", s.eps}, {"pixels", s.region.count()}},
                                   false};
          },
          [&](const RatioSource& s) {
            const double eps = s.eps.value_or(model.input_range().width());
            SmoothGradConfig sg = req.saliency;
            sg.seed = req.seed;
            const ImportanceMap imp = smoothgrad(model, req.x0, black_baseline(model), sg);
            MaskConstraint mask = ratio_to_mask(req.x0, imp.corrected(), s.ratio, eps);
            const std::size_t pixels = ratio_pixel_count(s.ratio, image_dims(shape).pixels());
            return BuiltConstraint{std::move(mask), {{"ratio", s.ratio}, {"eps", eps}, {"pixels", pixels}},
                                   false};
          },
          [&](const ImperceptibleSource& s) {
            return BuiltConstraint{imperceptible_mask(req.x0), {{"adaptive", s.adaptive}}, s.adaptive};
          },
      },
      req.constraint);
}

double linf_of(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

std::string constraint_kind(const ConstraintSource& source) {
  return std::visit(overloaded{
                        [](const UniformSource&) { return std::string("uniform"); },
                        [](const RegionSource&) { return std::string("region"); },
                        [](const RatioSource&) { return std::string("ratio"); },
                        [](const ImperceptibleSource&) { return std::string("imperceptible"); },
                    },
                    source);
}

void validate_request(const AttackRequest& req) {
  if (!req.model) throw InputError("attack request has no model");
  const NetworkModel& model = *req.model;
  if (req.x0.shape() != model.input_shape())
    throw InputError("image shape " + shape_to_string(req.x0.shape()) + " does not match the model input " +
                     shape_to_string(model.input_shape()));
  if (!req.x0.all_finite()) throw InputError("image contains non-finite values");
  const InputRange range = model.input_range();
  for (double v : req.x0.values())
    if (v < range.lo || v > range.hi) throw InputError("image values lie outside the model input range");
  if (req.true_label && *req.true_label >= model.num_classes()) throw InputError("true label out of range");
  req.deepfool.validate();
  req.bb.validate();
  if (req.deepfool.adaptive && !std::holds_alternative<ImperceptibleSource>(req.constraint))
    throw InputError("adaptive loosening is only available with the imperceptible constraint");

  std::visit(overloaded{
                 [&](const UniformSource& s) { check_eps(s.eps, range); },
                 [&](const RegionSource& s) {
                   check_eps(s.eps, range);
                   const ImageDims dims = image_dims(req.x0.shape());
                   if (s.region.height() != dims.height || s.region.width() != dims.width)
                     throw InputError("region mask " + shape_to_string(s.region.omega().shape()) +
                                      " does not match the image");
                 },
                 [&](const RatioSource& s) {
                   if (s.eps) check_eps(*s.eps, range);
                   ratio_pixel_count(s.ratio, image_dims(req.x0.shape()).pixels());
                   if (req.saliency.samples == 0 || req.saliency.ig_steps == 0)
                     throw InputError("importance estimation needs at least one sample and one step");
                 },
                 [&](const ImperceptibleSource&) {
                   const ImageDims dims = image_dims(req.x0.shape());
                   if (dims.height < 3 || dims.width < 3)
                     throw InputError("imperceptible constraint needs an image of at least 3x3 pixels");
                 },
             },
             req.constraint);
}

AttackResult run_attack(const AttackRequest& req) {
  validate_request(req);
  const auto start = Clock::now();
  const NetworkModel& model = *req.model;

  BuiltConstraint built = build_constraint(req);
  DeepFoolConfig df_cfg = req.deepfool;
  df_cfg.adaptive = built.adaptive;

  AttackResult result(built.mask);
  result.constraint_kind = constraint_kind(req.constraint);
  result.constraint_params = std::move(built.params);
  result.seed = req.seed;
  result.original_label = forward(model, req.x0).predicted_label;

  const auto df_start = Clock::now();
  DeepFoolResult df = deepfool_attack(model, req.x0, built.mask, df_cfg, req.true_label);
  result.deepfool_ms = ms_since(df_start);
  result.deepfool = df.trace;
  result.final_constraint = df.final_constraint;
  if (built.adaptive) result.constraint_params["final_scale"] = df.trace.constraint_scale;

  if (!df.adversarial) {
    result.wall_ms = ms_since(start);
    return result;
  }

  const Tensor& preliminary = *df.adversarial;
  result.preliminary_linf = linf_of(preliminary, req.x0);
  Tensor x_adv = preliminary;
  // A clean point that is already misclassified needs no boundary walk.
  if (forward(model, preliminary).predicted_label != result.original_label) {
    const auto bb_start = Clock::now();
    BBResult bb = bb_optimize(model, req.x0, preliminary, result.final_constraint, req.bb);
    result.bb_ms = ms_since(bb_start);
    result.bb = bb.trace;
    x_adv = std::move(bb.adversarial);
  }

  Tensor delta = x_adv;
  for (std::size_t i = 0; i < delta.size(); ++i) delta[i] -= req.x0[i];
  result.success = true;
  result.adversarial_label = forward(model, x_adv).predicted_label;
  result.metrics = measure(req.x0, x_adv, model.input_range().lo, model.input_range().hi);
  result.adversarial = std::move(x_adv);
  result.delta = std::move(delta);
  result.wall_ms = ms_since(start);
  return result;
}

double estimate_robust_radius(const NetworkModel& model, const Tensor& x0, const RegionMask& region,
                              const RadiusConfig& cfg) {
  if (region.count() == 0) throw InputError("robust radius needs a nonempty region");
  const double width = model.input_range().width();
  const MaskConstraint mask = region_to_mask(region, x0.shape(), width);
  DeepFoolConfig df_cfg = cfg.deepfool;
  df_cfg.adaptive = false;
  const DeepFoolResult df = deepfool_attack(model, x0, mask, df_cfg);
  if (!df.adversarial) return width;
  const BBResult bb = bb_optimize(model, x0, *df.adversarial, mask, cfg.bb);
  return linf_of(bb.adversarial, x0);
}

std::vector<RegionScore> refine_topk(const NetworkModel& model, const Tensor& x0, const ImportanceMap& imp,
                                     std::size_t h, std::size_t w, std::size_t k, const RadiusConfig& cfg) {
  const ImageDims dims = image_dims(x0.shape());
  std::vector<RegionScore> candidates = topk_rectangles(imp, h, w, k);
  for (RegionScore& c : candidates)
    c.robust_radius = estimate_robust_radius(model, x0, c.to_mask(dims.height, dims.width), cfg);
  return candidates;
}

const RegionScore& most_vulnerable(const std::vector<RegionScore>& measured) {
  if (measured.empty()) throw InputError("no candidate regions");
  const RegionScore* best = &measured.front();
  for (const RegionScore& c : measured) {
    if (!c.robust_radius) throw InputError("candidate region has no measured radius");
    if (*c.robust_radius < *best->robust_radius) best = &c;
  }
  return *best;
}

nlohmann::json make_report(const AttackResult& r) {
  nlohmann::json j;
  j["success"] = r.success;
  if (r.metrics) {
    const LpNorms& n = r.metrics->norms;
    j["norms"] = {{"l0", n.l0}, {"l1", n.l1}, {"l2", n.l2}, {"linf", n.linf}};
    j["ssim"] = r.metrics->ssim;
    j["ciede2000"] = r.metrics->ciede2000_total ? nlohmann::json(*r.metrics->ciede2000_total) : nlohmann::json();
  } else {
    j["norms"] = nullptr;
    j["ssim"] = nullptr;
    j["ciede2000"] = nullptr;
  }
  j["iterations"] = {{"deepfool", r.deepfool.iterations}, {"bb", r.bb ? r.bb->steps : 0}};
  j["constraint"] = {{"kind", r.constraint_kind}, {"params", r.constraint_params}};
  j["labels"] = {{"original", r.original_label},
                 {"adversarial", r.adversarial_label ? nlohmann::json(*r.adversarial_label) : nlohmann::json()}};
  j["preliminary_linf"] = r.preliminary_linf ? nlohmann::json(*r.preliminary_linf) : nlohmann::json();
  j["seed"] = r.seed;
  j["wall_ms"] = nullptr;
  return j;
}

std::string report_text(const AttackResult& r) {
  char buf[256];
  if (!r.success) {
    std::snprintf(buf, sizeof buf, "attack failed: label %zu kept after %zu deepfool iterations (%.1f ms)",
                  r.original_label, r.deepfool.iterations, r.wall_ms);
    return buf;
  }
  const LpNorms& n = r.metrics->norms;
  std::snprintf(buf, sizeof buf, "success: %zu -> %zu linf=%.6g l2=%.6g l0=%.0f ssim=%.6f (%.1f ms)",
                r.original_label, *r.adversarial_label, n.linf, n.l2, n.l0, r.metrics->ssim, r.wall_ms);
  std::string out = buf;
  if (r.metrics->ciede2000_total) {
    std::snprintf(buf, sizeof buf, " ciede2000=%.6g", *r.metrics->ciede2000_total);
    out += buf;
  }
  return out;
}

}  // namespace maskadv
