// Acceptance harness: one PASS/FAIL line per criterion.
//
//   acceptance            run all criteria
//   acceptance 4 7        run only the listed ones
//
// Exit status is non-zero when any selected criterion fails. Each line ends
// with the measured numbers so a failure can be read without rerunning.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>

#include "maskadv/bb.hpp"
#include "maskadv/dataset.hpp"
#include "maskadv/deepfool.hpp"
#include "maskadv/image_io.hpp"
#include "maskadv/metrics.hpp"
#include "maskadv/model_io.hpp"
#include "maskadv/pipeline.hpp"
#include "maskadv/saliency.hpp"
#include "support.hpp"

using namespace maskadv;
using namespace maskadv::testing;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double linf(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

struct Mnist {
  std::shared_ptr<const NetworkModel> model = std::make_shared<const NetworkModel>(load_model(fixture_model()));
  Dataset data = Dataset::open(mnist_dir());

  Tensor image(std::size_t i) const { return data.image(i, model->input_range()); }
  std::vector<std::size_t> correct(std::size_t n) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data.size() && out.size() < n; ++i)
      if (forward(*model, image(i)).predicted_label == data.label(i)) out.push_back(i);
    return out;
  }
  AttackResult attack(std::size_t i, ConstraintSource source) const {
    return run_attack(AttackRequest{model, image(i), std::move(source), {}, {}, {}, 0, std::nullopt});
  }
};

const Mnist& mnist() {
  static const Mnist m;
  return m;
}

// 1. Reverse-mode gradients against central differences.
Outcome gradients() {
  std::mt19937_64 rng(1001);
  double worst = 0;
  std::size_t checked = 0, skipped = 0;
  for (int model = 0; model < 50; ++model) {
    const NetworkModel m = random_model(rng, model % 2 == 1, 2 + model % 5);
    for (int input = 0; input < 5; ++input) {
      const Tensor x = random_tensor(m.input_shape(), rng, 0.05, 0.95);
      if (near_relu_kink(m, x)) {
        ++skipped;
        continue;
      }
      for (std::size_t k = 0; k < m.num_classes(); ++k) worst = std::max(worst, gradient_error(m, x, k));
      ++checked;
    }
  }
  return {worst < 1e-4 && checked >= 125,
          fmt("max rel err %.2e over %zu inputs (%zu near a ReLU kink skipped)", worst, checked, skipped)};
}

// 2. One DeepFool iteration on affine models equals the closest-hyperplane projection.
Outcome affine_deepfool() {
  std::mt19937_64 rng(1002);
  std::uniform_int_distribution<std::size_t> classes(3, 10), dims(5, 50);
  const InputRange range{-100, 100};
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const NetworkModel m = affine_model(dims(rng), classes(rng), rng, range);
    const Tensor x0 = random_tensor(m.input_shape(), rng, -1, 1);
    const std::size_t label = forward(m, x0).predicted_label;
    const MaskConstraint mask = uniform_mask(x0.shape(), range.width());
    const FeasibleBox box = feasible_box(x0, mask, range);
    const DeepFoolStep step = deepfool_step(m, x0, label, &box);
    Tensor x1 = x0;
    for (std::size_t i = 0; i < x1.size(); ++i) x1[i] += step.delta[i];
    x1 = clip(x1, box);
    worst = std::max(worst, linf(x1, affine_linf_projection(m, x0, label)));
  }
  return {worst <= 1e-6, fmt("max deviation from closed form %.2e over 20 models", worst)};
}

// 3. Boundary subproblem against grid search.
Outcome subproblem() {
  std::mt19937_64 rng(1003);
  std::uniform_real_distribution<double> u(0, 1);
  double worst_gap = 0, worst_violation = 0;
  std::size_t solved = 0;
  while (solved < 200) {
    const std::size_t n = solved < 100 ? 2 : 3;
    const Tensor x0 = random_tensor({n}, rng, 0.1, 0.9);
    const FeasibleBox box = feasible_box(x0, MaskConstraint(random_tensor({n}, rng, 0.02, 0.5)), {0, 1});
    const Tensor xc = clip(random_tensor({n}, rng, 0, 1), box);
    const Tensor b = random_tensor({n}, rng);
    const double r = 0.01 + u(rng);
    const Tensor target = clip(random_tensor({n}, rng, 0, 1), box);
    Tensor known({n});
    double c = 0, sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      known[i] = target[i] - xc[i];
      c += b[i] * known[i];
      sq += known[i] * known[i];
    }
    if (sq > r) continue;  // keep only instances with a known feasible point
    const SubproblemSolution s = solve_linf_subproblem(x0, xc, b, c, box, r);
    Tensor x = xc;
    double bd = 0, dd = 0, box_violation = 0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += s.delta[i];
      bd += b[i] * s.delta[i];
      dd += s.delta[i] * s.delta[i];
      box_violation = std::max({box_violation, box.lower[i] - x[i], x[i] - box.upper[i]});
    }
    worst_violation = std::max({worst_violation, std::abs(bd - c), dd - r, box_violation, s.feasible ? 0.0 : 1.0});
    const auto oracle = subproblem_oracle(x0, xc, b, c, box, r, 2e-3, &known);
    worst_gap = std::max(worst_gap, oracle ? std::abs(linf(x, x0) - *oracle) : 1.0);
    ++solved;
  }
  return {worst_gap <= 2e-3 && worst_violation <= 1e-9,
          fmt("200 instances: max |objective - oracle| %.2e, max constraint violation %.2e", worst_gap,
              worst_violation)};
}

// 4. Combined attack beats DeepFool alone, always succeeds, stays feasible.
Outcome dominance() {
  const Mnist& m = mnist();
  std::vector<double> final_linf, df_linf;
  std::size_t infeasible = 0, successes = 0;
  const auto images = m.correct(100);
  for (std::size_t i : images) {
    const AttackResult r = m.attack(i, UniformSource{m.model->input_range().width()});
    if (!r.success) continue;
    ++successes;
    final_linf.push_back(r.metrics->norms.linf);
    df_linf.push_back(*r.preliminary_linf);
    const Tensor x0 = m.image(i);
    const FeasibleBox box = feasible_box(x0, r.final_constraint, m.model->input_range());
    if (!box.contains(*r.adversarial) || forward(*m.model, *r.adversarial).predicted_label == r.original_label)
      ++infeasible;
  }
  const bool pass = images.size() == 100 && successes == 100 && mean(final_linf) < mean(df_linf) && infeasible == 0;
  return {pass, fmt("ASR %zu/%zu, mean Linf %.5f combined vs %.5f DeepFool only, %zu infeasible", successes,
                    images.size(), mean(final_linf), mean(df_linf), infeasible)};
}

// 5. Adaptive imperceptible attack versus the unconstrained one.
Outcome imperceptibility() {
  const Mnist& m = mnist();
  std::vector<double> ssim_linf, ssim_adaptive;
  std::size_t asr_adaptive = 0, asr_fixed = 0, asr_linf = 0;
  const auto images = m.correct(50);
  for (std::size_t i : images) {
    const AttackResult plain = m.attack(i, UniformSource{m.model->input_range().width()});
    if (plain.success) {
      ++asr_linf;
      ssim_linf.push_back(plain.metrics->ssim);
    }
    const AttackResult adaptive = m.attack(i, ImperceptibleSource{true});
    if (adaptive.success) {
      ++asr_adaptive;
      ssim_adaptive.push_back(adaptive.metrics->ssim);
    }
    asr_fixed += m.attack(i, ImperceptibleSource{false}).success;
  }
  const bool pass = mean(ssim_adaptive) > mean(ssim_linf) && asr_adaptive >= asr_fixed;
  return {pass, fmt("mean SSIM adaptive %.4f vs Linf %.4f; ASR adaptive %zu, non-adaptive %zu, Linf %zu (of %zu)",
                    mean(ssim_adaptive), mean(ssim_linf), asr_adaptive, asr_fixed, asr_linf, images.size())};
}

// 6. Integrated gradients: exact on linear models, complete on small nets.
Outcome ig_properties() {
  std::mt19937_64 rng(1006);
  double worst_linear = 0, worst_completeness = 0;
  for (int t = 0; t < 10; ++t) {
    const NetworkModel lin({9}, {0, 1}, 3, {random_dense(3, 9, rng)});
    const auto& w = std::get<DenseLayer>(lin.layers()[0]).weight;
    const Tensor x = random_tensor({9}, rng, 0, 1);
    const Tensor base = random_tensor({9}, rng, 0, 1);
    for (std::size_t steps : {1, 7, 64}) {
      const Tensor ig = integrated_gradients(lin, x, base, t % 3, steps);
      for (std::size_t i = 0; i < 9; ++i)
        worst_linear = std::max(worst_linear, std::abs(ig[i] - w[(t % 3) * 9 + i] * (x[i] - base[i])));
    }
  }
  for (int t = 0; t < 10; ++t) {
    const NetworkModel m = random_model(rng, t % 2 == 1);
    const Tensor x = random_tensor(m.input_shape(), rng, 0, 1);
    const Tensor base = black_baseline(m);
    const std::size_t k = forward(m, x).predicted_label;
    const Tensor ig = integrated_gradients(m, x, base, k, 256);
    const double sum = std::accumulate(ig.values().begin(), ig.values().end(), 0.0);
    const double gap = forward(m, x).values[k] - forward(m, base).values[k];
    worst_completeness = std::max(worst_completeness, std::abs(sum - gap) / std::max(std::abs(gap), 1e-6));
  }
  return {worst_linear <= 1e-9 && worst_completeness <= 0.02,
          fmt("linear max error %.2e, completeness max rel gap %.4f", worst_linear, worst_completeness)};
}

// 7. Region search: exactness, top-k dominance and quality against sliding windows.
Outcome region_search() {
  std::mt19937_64 rng(1007);
  std::uniform_int_distribution<std::size_t> side(3, 30);
  std::size_t mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t H = side(rng), W = side(rng);
    std::uniform_int_distribution<std::size_t> hh(1, H), ww(1, W);
    const std::size_t h = hh(rng), w = ww(rng);
    const ImportanceMap imp{random_tensor({H, W}, rng, 0, 1), random_tensor({H, W}, rng, 0.5, 1)};
    const auto all = all_windows(imp.corrected(), h, w);
    std::size_t best = 0;
    for (std::size_t j = 1; j < all.size(); ++j)
      if (all[j].score > all[best].score) best = j;
    const RegionScore r = best_rectangle(imp, h, w);
    mismatches += r.top != all[best].top || r.left != all[best].left;
  }

  const Mnist& m = mnist();
  const RadiusConfig cfg{};
  std::size_t monotone = 0, close = 0;
  std::string ratios;
  const auto images = m.correct(10);
  for (std::size_t i : images) {
    const Tensor x0 = m.image(i);
    const ImportanceMap imp = smoothgrad(*m.model, x0, black_baseline(*m.model), SmoothGradConfig{});
    const auto measured = refine_topk(*m.model, x0, imp, 10, 10, 20, cfg);
    auto min_radius = [&](std::size_t k) {
      double v = INFINITY;
      for (std::size_t j = 0; j < k; ++j) v = std::min(v, *measured[j].robust_radius);
      return v;
    };
    const double r1 = min_radius(1), r5 = min_radius(5), r20 = min_radius(20);
    monotone += r5 <= r1 && r20 <= r5;

    double sliding = INFINITY;
    for (std::size_t top = 0; top + 10 <= 28; ++top)
      for (std::size_t left = 0; left + 10 <= 28; ++left)
        sliding = std::min(sliding, estimate_robust_radius(*m.model, x0,
                                                           RegionMask::rectangle(28, 28, top, left, 10, 10), cfg));
    close += r1 <= 3 * sliding;
    ratios += fmt(" %.2f", r1 / sliding);
  }
  const bool pass = mismatches == 0 && monotone == images.size() && close >= 7;
  return {pass, fmt("exhaustive mismatches %zu/100; top-k monotone on %zu/%zu; k=1 within 3x of sliding minimum on "
                    "%zu/%zu (ratios%s)",
                    mismatches, monotone, images.size(), close, images.size(), ratios.c_str())};
}

// 8. Metrics: SSIM identity, CIEDE2000 reference pairs, norm ordering.
Outcome metrics() {
  std::mt19937_64 rng(1008);
  bool identity = true;
  for (int t = 0; t < 20; ++t) {
    const Tensor x = random_tensor({8, 8, t % 2 ? 3u : 1u}, rng, 0, 1);
    identity &= ssim(x, x, 1.0) == 1.0;
  }
  double worst_de = 0;
  const auto pairs = load_reference_pairs(source_dir() / "tests" / "data" / "ciede2000_sharma.txt");
  for (const auto& p : pairs)
    worst_de = std::max(worst_de, std::abs(delta_e2000({p.L1, p.a1, p.b1}, {p.L2, p.a2, p.b2}) - p.de));
  std::size_t ordered = 0;
  std::uniform_int_distribution<std::size_t> len(1, 100);
  for (int t = 0; t < 1000; ++t) {
    Tensor d = random_tensor({len(rng)}, rng);
    d[0] += 1e-3;  // at least one nonzero entry
    const LpNorms n = lp_norms(d);
    ordered += n.linf <= n.l2 && n.l2 <= n.l1;
  }
  return {identity && pairs.size() == 34 && worst_de < 1e-4 && ordered == 1000,
          fmt("ssim(x,x)==1: %s; CIEDE2000 max error %.2e on %zu pairs; norm ordering %zu/1000",
              identity ? "yes" : "no", worst_de, pairs.size(), ordered)};
}

// 9. Two identical CLI invocations give byte-identical reports.
Outcome cli_determinism() {
  std::vector<std::string> reports;
  for (int run = 0; run < 2; ++run) {
    const auto dir = scratch_dir("acceptance_cli_" + std::to_string(run));
    const std::string cmd = cli_binary().string() + " --ratio 0.3 --index 0 --seed 42 --path_model " +
                            fixture_model().string() + " --dataset " + mnist_dir().string() + " --output " +
                            dir.string() + " > /dev/null";
    const int code = run_command(cmd);
    if (code != 0 && code != 2) return {false, fmt("CLI exited with %d", code)};
    const auto run_dir = std::filesystem::directory_iterator(dir)->path();
    const auto bytes = read_file(run_dir / "report.json");
    reports.emplace_back(bytes.begin(), bytes.end());
  }
  return {reports[0] == reports[1] && !reports[0].empty(),
          fmt("reports %s (%zu bytes)", reports[0] == reports[1] ? "identical" : "differ", reports[0].size())};
}

struct Criterion {
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, Criterion> criteria{
      {1, {"gradient oracle", 60, gradients}},
      {2, {"affine DeepFool exactness", 10, affine_deepfool}},
      {3, {"boundary subproblem oracle", 120, subproblem}},
      {4, {"pipeline dominance and feasibility", 600, dominance}},
      {5, {"imperceptibility direction", 900, imperceptibility}},
      {6, {"integrated gradients properties", 60, ig_properties}},
      {7, {"region search", 1800, region_search}},
      {8, {"metrics", 30, metrics}},
      {9, {"CLI report determinism", 60, cli_determinism}},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [id, c] : criteria) selected.push_back(id);

  bool all = true;
  for (int id : selected) {
    auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << id << "\n";
      return 1;
    }
    const Criterion& c = it->second;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs < c.limit_s;
    all &= pass;
    std::cout << "criterion " << id << " [" << c.name << "]: " << (pass ? "PASS" : "FAIL") << " - " << o.detail
              << fmt("; %.1f s (limit %.0f s)", secs, c.limit_s) << std::endl;
  }
  return all ? 0 : 1;
}
