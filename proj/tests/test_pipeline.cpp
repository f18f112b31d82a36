#include <doctest.h>

#include "maskadv/dataset.hpp"
#include "maskadv/errors.hpp"
#include "maskadv/model_io.hpp"
#include "maskadv/pipeline.hpp"
#include "maskadv/service.hpp"
#include "support.hpp"

using namespace maskadv;
using namespace maskadv::testing;

namespace {

struct Fixture {
  std::shared_ptr<const NetworkModel> model = std::make_shared<const NetworkModel>(load_model(fixture_model()));
  Dataset data = Dataset::open(mnist_dir());

  // Indices of the first n correctly classified test images.
  std::vector<std::size_t> correct(std::size_t n) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data.size() && out.size() < n; ++i)
      if (forward(*model, image(i)).predicted_label == data.label(i)) out.push_back(i);
    return out;
  }
  Tensor image(std::size_t i) const { return data.image(i, model->input_range()); }

  AttackRequest request(std::size_t i, ConstraintSource source) const {
    AttackRequest req{model, image(i), std::move(source), {}, {}, {}, 0, std::nullopt};
    return req;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("fixture model reaches the accuracy floor") {
  const auto& f = fixture();
  std::size_t right = 0;
  for (std::size_t i = 0; i < f.data.size(); ++i) right += forward(*f.model, f.image(i)).predicted_label == f.data.label(i);
  CHECK(static_cast<double>(right) / f.data.size() >= 0.90);
}

TEST_CASE("unconstrained attacks succeed and improve on DeepFool") {
  const auto& f = fixture();
  for (std::size_t i : f.correct(8)) {
    const AttackResult r = run_attack(f.request(i, UniformSource{1.0}));
    REQUIRE(r.success);
    CHECK(*r.adversarial_label != r.original_label);
    CHECK(forward(*f.model, *r.adversarial).predicted_label == *r.adversarial_label);
    CHECK(r.metrics->norms.linf <= *r.preliminary_linf + 1e-12);
    const LpNorms n = lp_norms(*r.delta);
    CHECK(std::abs(n.l1 - r.metrics->norms.l1) < 1e-9);
    CHECK(std::abs(n.linf - r.metrics->norms.linf) < 1e-9);
    CHECK(feasible_box(f.image(i), r.final_constraint, f.model->input_range()).contains(*r.adversarial, 1e-12));
  }
}

TEST_CASE("eps 0 fails without a boundary walk") {
  const auto& f = fixture();
  const AttackResult r = run_attack(f.request(0, UniformSource{0.0}));
  CHECK_FALSE(r.success);
  CHECK_FALSE(r.adversarial);
  CHECK_FALSE(r.bb);
  CHECK(r.bb_ms == 0.0);
  const nlohmann::json report = make_report(r);
  CHECK(report["norms"].is_null());
  CHECK(report["ssim"].is_null());
  CHECK(report["success"] == false);
}

TEST_CASE("regional attacks leave the outside untouched") {
  const auto& f = fixture();
  const RegionMask region = RegionMask::rectangle(28, 28, 8, 8, 12, 12);
  for (std::size_t i : f.correct(4)) {
    const AttackResult r = run_attack(f.request(i, RegionSource{region, 1.0}));
    if (!r.success) continue;
    const Tensor x0 = f.image(i);
    for (std::size_t p = 0; p < 784; ++p)
      if (!region.contains(p)) CHECK((*r.adversarial)[p] == x0[p]);
    CHECK(r.constraint_params["pixels"] == 144);
  }
}

TEST_CASE("ratio attacks unmask the requested pixel count") {
  const auto& f = fixture();
  const std::size_t i = f.correct(1).front();
  AttackRequest req = f.request(i, RatioSource{0.3, std::nullopt});
  req.saliency.samples = 2;
  req.saliency.ig_steps = 16;
  const AttackResult r = run_attack(req);
  CHECK(r.initial_constraint.active_pixels() == 235);
  CHECK(r.constraint_params["pixels"] == 235);
  if (r.success)
    for (std::size_t p = 0; p < 784; ++p)
      if (r.initial_constraint.eps()[p] == 0.0) CHECK((*r.delta)[p] == 0.0);
  // Same seed, same mask.
  CHECK(run_attack(req).initial_constraint == r.initial_constraint);
}

TEST_CASE("imperceptible attacks") {
  const auto& f = fixture();
  SUBCASE("constant image fails") {
    AttackRequest req = f.request(0, ImperceptibleSource{true});
    req.x0 = Tensor({28, 28, 1}, 0.5);
    const AttackResult r = run_attack(req);
    CHECK_FALSE(r.success);
  }
  SUBCASE("feasible under the loosened bound") {
    for (std::size_t i : f.correct(5)) {
      const AttackResult r = run_attack(f.request(i, ImperceptibleSource{true}));
      CHECK(r.constraint_params["adaptive"] == true);
      if (!r.success) continue;
      const MaskConstraint& fin = r.final_constraint;
      for (std::size_t j = 0; j < 784; ++j) {
        CHECK(fin.eps()[j] >= r.initial_constraint.eps()[j]);
        CHECK(std::abs((*r.delta)[j]) <= fin.eps()[j] + 1e-12);
      }
    }
  }
}

TEST_CASE("request validation") {
  const auto& f = fixture();
  AttackRequest req = f.request(0, UniformSource{1.5});
  CHECK_THROWS_AS(validate_request(req), InputError);
  req.constraint = UniformSource{0.1};
  req.deepfool.adaptive = true;
  CHECK_THROWS_AS(validate_request(req), InputError);
  req.deepfool.adaptive = false;
  req.constraint = RegionSource{RegionMask::full(27, 28), 0.1};
  CHECK_THROWS_AS(validate_request(req), InputError);
  req.constraint = RatioSource{2000, std::nullopt};
  CHECK_THROWS_AS(validate_request(req), InputError);
  req.constraint = UniformSource{0.1};
  req.x0 = Tensor({28, 28, 1}, 1.5);
  CHECK_THROWS_AS(validate_request(req), InputError);
  req.x0 = Tensor({28, 28}, 0.5);
  CHECK_THROWS_AS(validate_request(req), InputError);
}

TEST_CASE("constraint options map to sources with distinct conflicts") {
  const auto& f = fixture();
  ConstraintOptions o;
  CHECK(std::get<UniformSource>(make_constraint_source(o, *f.model)).eps == 1.0);
  o.eps = 0.0;
  CHECK_THROWS_AS(make_constraint_source(o, *f.model), InputError);

  std::vector<std::string> messages;
  auto message = [&](ConstraintOptions c) {
    try {
      make_constraint_source(c, *f.model);
    } catch (const InputError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  ConstraintOptions a;
  a.kind = "imperceptible";
  a.eps = 0.1;
  ConstraintOptions b;
  b.kind = "imperceptible";
  b.ratio = 0.3;
  ConstraintOptions c;
  c.kind = "region";
  ConstraintOptions d;
  d.kind = "ratio";
  ConstraintOptions e;
  e.kind = "nope";
  ConstraintOptions g;
  g.ratio = 0.2;
  for (const auto& opts : {a, b, c, d, e, g}) messages.push_back(message(opts));
  for (const auto& m : messages) CHECK_FALSE(m.empty());
  std::sort(messages.begin(), messages.end());
  CHECK(std::unique(messages.begin(), messages.end()) == messages.end());
}

TEST_CASE("robust radius") {
  const auto& f = fixture();
  const std::size_t i = f.correct(1).front();
  const Tensor x0 = f.image(i);
  const RadiusConfig cfg{};

  SUBCASE("full region equals the unconstrained attack") {
    const double full = estimate_robust_radius(*f.model, x0, RegionMask::full(28, 28), cfg);
    const AttackResult r = run_attack(f.request(i, UniformSource{1.0}));
    CHECK(full == doctest::Approx(r.metrics->norms.linf).epsilon(1e-12));
  }
  SUBCASE("a corner pixel cannot flip the label") {
    CHECK(estimate_robust_radius(*f.model, x0, RegionMask::rectangle(28, 28, 0, 0, 1, 1), cfg) == 1.0);
  }
  SUBCASE("empty region is rejected") {
    CHECK_THROWS_AS(estimate_robust_radius(*f.model, x0, RegionMask(Tensor({28, 28}, 0.0)), cfg), InputError);
  }
  SUBCASE("refined top-k keeps order and picks the smallest radius") {
    SmoothGradConfig sg;
    sg.samples = 2;
    sg.ig_steps = 16;
    const ImportanceMap imp = smoothgrad(*f.model, x0, black_baseline(*f.model), sg);
    const auto measured = refine_topk(*f.model, x0, imp, 10, 10, 3, cfg);
    REQUIRE(measured.size() == 3);
    CHECK(measured[0].score >= measured[1].score);
    const RegionScore& best = most_vulnerable(measured);
    for (const auto& m : measured) CHECK(*best.robust_radius <= *m.robust_radius);
  }
}

TEST_CASE("report document") {
  const auto& f = fixture();
  const AttackResult r = run_attack(f.request(f.correct(1).front(), UniformSource{0.2}));
  const nlohmann::json j = make_report(r);
  for (const char* key : {"success", "norms", "ssim", "ciede2000", "iterations", "constraint", "seed", "wall_ms",
                          "labels", "preliminary_linf"})
    CHECK(j.contains(key));
  CHECK(j["constraint"]["kind"] == "uniform");
  CHECK(j["constraint"]["params"]["eps"] == 0.2);
  CHECK(j["wall_ms"].is_null());
  CHECK(j["ciede2000"].is_null());
  if (r.success) CHECK(j["norms"]["linf"].get<double>() <= 0.2 + 1e-12);
  CHECK(make_report(r) == make_report(run_attack(f.request(f.correct(1).front(), UniformSource{0.2}))));
}
