#pragma once

// Shared builders for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <optional>
#include <random>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "maskadv/constraints.hpp"
#include "maskadv/network.hpp"
#include "maskadv/tensor.hpp"

namespace maskadv::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

inline DenseLayer random_dense(std::size_t out, std::size_t in, std::mt19937_64& rng, double scale = 1.0) {
  const double s = scale / std::sqrt(static_cast<double>(in));
  return DenseLayer{random_tensor({out, in}, rng, -s, s), random_tensor({out}, rng, -0.1, 0.1)};
}

// f(x) = W x + b on a flat input of size d.
inline NetworkModel affine_model(std::size_t d, std::size_t k, std::mt19937_64& rng, InputRange range = {0, 1}) {
  return NetworkModel({d}, range, k, {random_dense(k, d, rng, 2.0)});
}

// Random model with at most 5 parametric/activation layers. Mixes dense,
// conv, relu and sigmoid depending on `conv`.
inline NetworkModel random_model(std::mt19937_64& rng, bool conv, std::size_t classes = 4) {
  std::vector<Layer> layers;
  std::uniform_int_distribution<int> coin(0, 1);
  const bool sigmoid = coin(rng) == 1;
  auto act = [&]() -> Layer { return sigmoid ? Layer{SigmoidLayer{}} : Layer{ReluLayer{}}; };
  if (conv) {
    const Shape in{6, 6, 2};
    Conv2dLayer c{random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5), random_tensor({3}, rng, -0.1, 0.1), {1, 1}, {1, 1}};
    layers.push_back(c);
    layers.push_back(act());
    layers.push_back(FlattenLayer{});
    layers.push_back(random_dense(classes, 6 * 6 * 3, rng, 2.0));
    return NetworkModel(in, {0, 1}, classes, std::move(layers));
  }
  const std::size_t d = 8;
  layers.push_back(random_dense(12, d, rng, 2.0));
  layers.push_back(act());
  layers.push_back(random_dense(10, 12, rng, 2.0));
  layers.push_back(act());
  layers.push_back(random_dense(classes, 10, rng, 2.0));
  return NetworkModel({d}, {0, 1}, classes, std::move(layers));
}

// True when some ReLU input sits close enough to its kink that a finite
// difference step could cross it.
inline bool near_relu_kink(const NetworkModel& model, const Tensor& x, double margin = 1e-3) {
  const auto trace = detail::forward_trace(model, x);
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (!std::holds_alternative<ReluLayer>(model.layers()[i])) continue;
    for (double z : trace.acts[i])
      if (std::abs(z) < margin) return true;
  }
  return false;
}

// Max relative error of input_gradient against central differences, with
// the denominator floored at 1e-3 so vanishing entries compare absolutely.
inline double gradient_error(const NetworkModel& model, const Tensor& x, std::size_t k, double h = 1e-4) {
  const Tensor g = input_gradient(model, x, k);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (forward(model, xp).values[k] - forward(model, xm).values[k]) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-3});
    worst = std::max(worst, std::abs(fd - g[i]) / denom);
  }
  return worst;
}

// Closest linearised boundary of an affine model in the L-infinity sense,
// by enumerating every hyperplane f_k = f_label: x + |f'_k|/||w'_k||_1 * sign(w'_k).
inline Tensor affine_linf_projection(const NetworkModel& model, const Tensor& x, std::size_t label) {
  const auto& layer = std::get<DenseLayer>(model.layers().at(0));
  const std::size_t d = x.size();
  const Scores s = forward(model, x);
  double best = INFINITY;
  std::size_t best_k = 0;
  for (std::size_t k = 0; k < model.num_classes(); ++k) {
    if (k == label) continue;
    double l1 = 0;
    for (std::size_t i = 0; i < d; ++i) l1 += std::abs(layer.weight[k * d + i] - layer.weight[label * d + i]);
    const double dist = std::abs(s.values[k] - s.values[label]) / l1;
    if (dist < best) {
      best = dist;
      best_k = k;
    }
  }
  Tensor out = x;
  for (std::size_t i = 0; i < d; ++i) {
    const double w = layer.weight[best_k * d + i] - layer.weight[label * d + i];
    out[i] += best * ((w > 0) - (w < 0));
  }
  return out;
}

// Brute-force optimum of the boundary subproblem in 2 or 3 dimensions:
// a grid over the hyperplane b.delta = c (parametrised by an orthonormal
// basis of b's complement), then a shrinking pattern search from the best
// grid point. A known feasible step, when given, joins the grid as a start
// so thin feasible sets are not missed. Returns nothing when no start is
// feasible.
inline std::optional<double> subproblem_oracle(const Tensor& x0, const Tensor& x_cur, const Tensor& b, double c,
                                               const FeasibleBox& box, double r, double grid_step,
                                               const Tensor* known_step = nullptr) {
  const std::size_t n = b.size();
  double bb = 0;
  for (std::size_t i = 0; i < n; ++i) bb += b[i] * b[i];
  std::vector<double> base(n);
  for (std::size_t i = 0; i < n; ++i) base[i] = c * b[i] / bb;
  // Orthonormal complement of b by Gram-Schmidt over the unit vectors.
  std::vector<std::vector<double>> basis;
  for (std::size_t e = 0; e < n && basis.size() + 1 < n; ++e) {
    std::vector<double> v(n, 0.0);
    v[e] = 1.0;
    auto project_out = [&](const std::vector<double>& u, double uu) {
      double dot = 0;
      for (std::size_t i = 0; i < n; ++i) dot += v[i] * u[i];
      for (std::size_t i = 0; i < n; ++i) v[i] -= dot / uu * u[i];
    };
    project_out(std::vector<double>(b.values().begin(), b.values().end()), bb);
    for (const auto& u : basis) project_out(u, 1.0);
    double norm = 0;
    for (double x : v) norm += x * x;
    if (norm < 1e-8) continue;
    for (double& x : v) x /= std::sqrt(norm);
    basis.push_back(v);
  }
  auto eval = [&](const std::vector<double>& coef) -> std::optional<double> {
    double sq = 0, obj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = base[i];
      for (std::size_t j = 0; j < basis.size(); ++j) d += coef[j] * basis[j][i];
      const double xi = x_cur[i] + d;
      if (xi < box.lower[i] - 1e-12 || xi > box.upper[i] + 1e-12) return std::nullopt;
      sq += d * d;
      obj = std::max(obj, std::abs(x0[i] - xi));
    }
    if (sq > r + 1e-12) return std::nullopt;
    return obj;
  };
  const double reach = std::sqrt(r);
  const std::size_t m = basis.size();
  const long steps = static_cast<long>(std::ceil(reach / grid_step));
  std::vector<double> best_coef;
  std::optional<double> best;
  std::vector<double> coef(m);
  std::vector<long> idx(m, -steps);
  while (true) {
    for (std::size_t j = 0; j < m; ++j) coef[j] = idx[j] * grid_step;
    if (auto v = eval(coef); v && (!best || *v < *best)) {
      best = v;
      best_coef = coef;
    }
    std::size_t j = 0;
    while (j < m && ++idx[j] > steps) idx[j++] = -steps;
    if (j == m) break;
  }
  if (known_step) {
    std::vector<double> kc(m, 0.0);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t i = 0; i < n; ++i) kc[j] += ((*known_step)[i] - base[i]) * basis[j][i];
    if (auto v = eval(kc); v && (!best || *v < *best)) {
      best = v;
      best_coef = kc;
    }
  }
  if (!best) return std::nullopt;
  for (double h = grid_step; h > 1e-9; h *= 0.5) {
    bool moved = true;
    while (moved) {
      moved = false;
      // Every neighbour on the 3^m stencil, so moves along kinks of the max are found.
      std::vector<int> dir(m, -1);
      while (true) {
        if (std::any_of(dir.begin(), dir.end(), [](int d) { return d != 0; })) {
          std::vector<double> trial = best_coef;
          for (std::size_t j = 0; j < m; ++j) trial[j] += dir[j] * h;
          if (auto v = eval(trial); v && *v < *best - 1e-15) {
            best = v;
            best_coef = trial;
            moved = true;
          }
        }
        std::size_t j = 0;
        while (j < m && ++dir[j] > 1) dir[j++] = -1;
        if (j == m) break;
      }
    }
  }
  return best;
}

// Every h x w window score of an (H, W) map by direct summation, in
// row-major corner order.
struct WindowScore {
  std::size_t top, left;
  double score;
};

inline std::vector<WindowScore> all_windows(const Tensor& map, std::size_t h, std::size_t w) {
  const std::size_t H = map.shape()[0], W = map.shape()[1];
  std::vector<WindowScore> out;
  for (std::size_t t = 0; t + h <= H; ++t)
    for (std::size_t l = 0; l + w <= W; ++l) {
      double sum = 0;
      for (std::size_t i = t; i < t + h; ++i)
        for (std::size_t j = l; j < l + w; ++j) sum += map[i * W + j];
      out.push_back({t, l, sum});
    }
  return out;
}

// Published CIEDE2000 reference pairs (Sharma, Wu and Dalal), tab separated
// with L1 a1 b1 in columns 2-4, dE in column 15 and L2 a2 b2 in 17-19.
struct ReferencePair {
  double L1, a1, b1, L2, a2, b2, de;
};

inline std::vector<ReferencePair> load_reference_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<ReferencePair> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<double> cols;
    double v;
    while (ss >> v) cols.push_back(v);
    if (cols.size() < 20) continue;
    out.push_back({cols[2], cols[3], cols[4], cols[17], cols[18], cols[19], cols[15]});
  }
  return out;
}

// Paths baked in by CMake.
inline std::filesystem::path source_dir() { return MASKADV_SOURCE_DIR; }
inline std::filesystem::path fixture_model() { return MASKADV_FIXTURE_MODEL; }
inline std::filesystem::path cli_binary() { return MASKADV_CLI; }
inline std::filesystem::path mnist_dir() { return source_dir() / "data" / "mnist"; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::path(MASKADV_BINARY_DIR) / "scratch" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Runs a shell command, returns its exit status.
inline int run_command(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace maskadv::testing
