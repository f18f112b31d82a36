#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "maskadv/tensor.hpp"

namespace maskadv {

struct DenseLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
};

// Convolution over (H, W, C) activations with a [out, in, kh, kw] kernel.
struct Conv2dLayer {
  Tensor kernel;
  Tensor bias;  // [out]
  std::array<std::size_t, 2> stride{1, 1};
  std::array<std::size_t, 2> padding{0, 0};
};

struct ReluLayer {};
struct SigmoidLayer {};
struct FlattenLayer {};

// Adds the output of layer `from` (-1 names the network input) to the running activation.
struct ResidualAddLayer {
  int from = -1;
};

using Layer =
    std::variant<DenseLayer, Conv2dLayer, ReluLayer, SigmoidLayer, FlattenLayer, ResidualAddLayer>;

std::string layer_kind(const Layer& layer);

struct InputRange {
  double lo = 0.0;
  double hi = 1.0;

  double width() const noexcept { return hi - lo; }
  friend bool operator==(const InputRange&, const InputRange&) = default;
};

/// Immutable feed-forward classifier. Construction validates that every
/// layer's shape composes with its predecessor and that the final output
/// is a vector of num_classes scores.
class NetworkModel {
 public:
  NetworkModel(Shape input_shape, InputRange input_range, std::size_t num_classes,
               std::vector<Layer> layers);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const InputRange& input_range() const noexcept { return input_range_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  // Shape of the activation after layer i; index 0 is the input itself.
  const Shape& activation_shape(std::size_t i) const { return activation_shapes_[i]; }

  // Mutable access for the SGD fixture trainer only.
  std::vector<Layer>& mutable_layers() noexcept { return layers_; }

 private:
  Shape input_shape_;
  InputRange input_range_;
  std::size_t num_classes_;
  std::vector<Layer> layers_;
  std::vector<Shape> activation_shapes_;
};

struct Scores {
  std::vector<double> values;
  std::size_t predicted_label = 0;
};

// Argmax with ties broken toward the lowest index.
std::size_t argmax(std::span<const double> values);

Scores forward(const NetworkModel& model, const Tensor& x);

// Gradient of class score k with respect to the input.
Tensor input_gradient(const NetworkModel& model, const Tensor& x, std::size_t k);

struct ScoreDiff {
  double value = 0.0;  // f_k(x) - f_base(x)
  Tensor grad;         // grad f_k - grad f_base
};

ScoreDiff score_diff_gradient(const NetworkModel& model, const Tensor& x, std::size_t k,
                              std::size_t base);

// Scores plus the gradient of every class score, sharing one forward pass.
struct Jacobian {
  Scores scores;
  std::vector<Tensor> rows;
};

Jacobian jacobian(const NetworkModel& model, const Tensor& x);

// Gradient of sum_k weights[k] * f_k(x), together with the scores at x.
std::pair<Scores, Tensor> weighted_score_gradient(const NetworkModel& model, const Tensor& x,
                                                  std::span<const double> weights);

namespace detail {

// Activations of every layer; acts[0] is the input, acts[i + 1] the output of layer i.
struct ForwardTrace {
  std::vector<std::vector<double>> acts;
};

ForwardTrace forward_trace(const NetworkModel& model, const Tensor& x);

// Parameter gradients, one entry per layer (empty tensors for parameter-free layers).
struct ParamGrads {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;
};

// Back-propagates grad_out (length num_classes) to the input. Accumulates
// into params when it is non-null.
std::vector<double> backward(const NetworkModel& model, const ForwardTrace& trace,
                             std::span<const double> grad_out, ParamGrads* params = nullptr);

}  // namespace detail

}  // namespace maskadv
