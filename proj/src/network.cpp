#include "maskadv/network.hpp"

#include <cmath>

#include "maskadv/errors.hpp"

namespace maskadv {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

std::string layer_label(std::size_t index, const Layer& layer) {
  return "layer " + std::to_string(index) + " (" + layer_kind(layer) + ")";
}

Shape conv_output_shape(const Conv2dLayer& conv, const Shape& in, const std::string& label) {
  const Shape& k = conv.kernel.shape();
  if (k.size() != 4) throw InputError(label + ": kernel must be [out, in, kh, kw]");
  if (in.size() != 3) throw InputError(label + ": expects an (H, W, C) input, got " + shape_to_string(in));
  if (in[2] != k[1])
    throw InputError(label + ": kernel expects " + std::to_string(k[1]) + " channels, input has " +
                     std::to_string(in[2]));
  if (conv.bias.shape() != Shape{k[0]})
    throw InputError(label + ": bias must have shape [" + std::to_string(k[0]) + "]");
  if (conv.stride[0] == 0 || conv.stride[1] == 0) throw InputError(label + ": stride must be positive");
  const std::size_t ph = in[0] + 2 * conv.padding[0];
  const std::size_t pw = in[1] + 2 * conv.padding[1];
  if (ph < k[2] || pw < k[3]) throw InputError(label + ": kernel larger than padded input");
  return {(ph - k[2]) / conv.stride[0] + 1, (pw - k[3]) / conv.stride[1] + 1, k[0]};
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void dense_forward(const DenseLayer& d, std::span<const double> in, std::vector<double>& out) {
  const std::size_t rows = d.weight.shape()[0];
  const std::size_t cols = d.weight.shape()[1];
  out.assign(rows, 0.0);
  const double* w = d.weight.values().data();
  for (std::size_t o = 0; o < rows; ++o) {
    double acc = d.bias[o];
    const double* row = w + o * cols;
    for (std::size_t i = 0; i < cols; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

void conv_forward(const Conv2dLayer& c, const Shape& in_shape, const Shape& out_shape,
                  std::span<const double> in, std::vector<double>& out) {
  const auto& k = c.kernel.shape();
  const std::size_t co = k[0], ci = k[1], kh = k[2], kw = k[3];
  const std::size_t H = in_shape[0], W = in_shape[1];
  const std::size_t OH = out_shape[0], OW = out_shape[1];
  out.assign(OH * OW * co, 0.0);
  for (std::size_t oy = 0; oy < OH; ++oy) {
    for (std::size_t ox = 0; ox < OW; ++ox) {
      for (std::size_t o = 0; o < co; ++o) {
        double acc = c.bias[o];
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long iy = long(oy * c.stride[0] + ky) - long(c.padding[0]);
          if (iy < 0 || iy >= long(H)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long ix = long(ox * c.stride[1] + kx) - long(c.padding[1]);
            if (ix < 0 || ix >= long(W)) continue;
            const double* px = &in[(std::size_t(iy) * W + std::size_t(ix)) * ci];
            for (std::size_t ch = 0; ch < ci; ++ch)
              acc += c.kernel[((o * ci + ch) * kh + ky) * kw + kx] * px[ch];
          }
        }
        out[(oy * OW + ox) * co + o] = acc;
      }
    }
  }
}

void conv_backward(const Conv2dLayer& c, const Shape& in_shape, const Shape& out_shape,
                   std::span<const double> in, std::span<const double> gout,
                   std::vector<double>& gin, Tensor* dkernel, Tensor* dbias) {
  const auto& k = c.kernel.shape();
  const std::size_t co = k[0], ci = k[1], kh = k[2], kw = k[3];
  const std::size_t H = in_shape[0], W = in_shape[1];
  const std::size_t OH = out_shape[0], OW = out_shape[1];
  gin.assign(H * W * ci, 0.0);
  for (std::size_t oy = 0; oy < OH; ++oy) {
    for (std::size_t ox = 0; ox < OW; ++ox) {
      for (std::size_t o = 0; o < co; ++o) {
        const double g = gout[(oy * OW + ox) * co + o];
        if (g == 0.0) continue;
        if (dbias) (*dbias)[o] += g;
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const long iy = long(oy * c.stride[0] + ky) - long(c.padding[0]);
          if (iy < 0 || iy >= long(H)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const long ix = long(ox * c.stride[1] + kx) - long(c.padding[1]);
            if (ix < 0 || ix >= long(W)) continue;
            const std::size_t base = (std::size_t(iy) * W + std::size_t(ix)) * ci;
            for (std::size_t ch = 0; ch < ci; ++ch) {
              const std::size_t ki = ((o * ci + ch) * kh + ky) * kw + kx;
              gin[base + ch] += c.kernel[ki] * g;
              if (dkernel) (*dkernel)[ki] += in[base + ch] * g;
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::string layer_kind(const Layer& layer) {
  return std::visit(overloaded{[](const DenseLayer&) { return "dense"; },
                               [](const Conv2dLayer&) { return "conv2d"; },
                               [](const ReluLayer&) { return "relu"; },
                               [](const SigmoidLayer&) { return "sigmoid"; },
                               [](const FlattenLayer&) { return "flatten"; },
                               [](const ResidualAddLayer&) { return "residual_add"; }},
                    layer);
}

NetworkModel::NetworkModel(Shape input_shape, InputRange input_range, std::size_t num_classes,
                           std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)),
      input_range_(input_range),
      num_classes_(num_classes),
      layers_(std::move(layers)) {
  if (input_shape_.empty() || shape_size(input_shape_) == 0)
    throw InputError("model input shape must be non-empty");
  if (!(input_range_.lo < input_range_.hi))
    throw InputError("model input range must satisfy lo < hi");
  if (num_classes_ < 2) throw InputError("model needs at least two classes");

  activation_shapes_.push_back(input_shape_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Shape& in = activation_shapes_.back();
    const std::string label = layer_label(i, layers_[i]);
    Shape out = std::visit(
        overloaded{
            [&](const DenseLayer& d) -> Shape {
              const Shape& w = d.weight.shape();
              if (w.size() != 2) throw InputError(label + ": weight must be [out, in]");
              if (in.size() != 1 || in[0] != w[1])
                throw InputError(label + ": expects a vector of " + std::to_string(w[1]) +
                                 " values, got " + shape_to_string(in));
              if (d.bias.shape() != Shape{w[0]})
                throw InputError(label + ": bias must have shape [" + std::to_string(w[0]) + "]");
              return {w[0]};
            },
            [&](const Conv2dLayer& c) -> Shape { return conv_output_shape(c, in, label); },
            [&](const ReluLayer&) -> Shape { return in; },
            [&](const SigmoidLayer&) -> Shape { return in; },
            [&](const FlattenLayer&) -> Shape { return {shape_size(in)}; },
            [&](const ResidualAddLayer& r) -> Shape {
              if (r.from < -1 || r.from >= int(i))
                throw InputError(label + ": residual source must be an earlier layer or -1");
              if (activation_shapes_[std::size_t(r.from + 1)] != in)
                throw InputError(label + ": residual source shape " +
                                 shape_to_string(activation_shapes_[std::size_t(r.from + 1)]) +
                                 " differs from " + shape_to_string(in));
              return in;
            }},
        layers_[i]);
    activation_shapes_.push_back(std::move(out));
  }
  if (activation_shapes_.back() != Shape{num_classes_})
    throw InputError("model output shape " + shape_to_string(activation_shapes_.back()) +
                     " does not match num_classes " + std::to_string(num_classes_));
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

namespace detail {

ForwardTrace forward_trace(const NetworkModel& model, const Tensor& x) {
  if (x.shape() != model.input_shape())
    throw InputError("input shape " + shape_to_string(x.shape()) + " does not match model input " +
                     shape_to_string(model.input_shape()));
  ForwardTrace trace;
  const auto& layers = model.layers();
  trace.acts.reserve(layers.size() + 1);
  trace.acts.push_back(x.vec());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::vector<double>& in = trace.acts.back();
    std::vector<double> out;
    std::visit(overloaded{
                   [&](const DenseLayer& d) { dense_forward(d, in, out); },
                   [&](const Conv2dLayer& c) {
                     conv_forward(c, model.activation_shape(i), model.activation_shape(i + 1), in, out);
                   },
                   [&](const ReluLayer&) {
                     out = in;
                     for (double& v : out) v = v > 0.0 ? v : 0.0;
                   },
                   [&](const SigmoidLayer&) {
                     out = in;
                     for (double& v : out) v = sigmoid(v);
                   },
                   [&](const FlattenLayer&) { out = in; },
                   [&](const ResidualAddLayer& r) {
                     out = in;
                     const auto& src = trace.acts[std::size_t(r.from + 1)];
                     for (std::size_t j = 0; j < out.size(); ++j) out[j] += src[j];
                   }},
               layers[i]);
    for (double v : out)
      if (!std::isfinite(v)) throw NumericError("non-finite activation in " + layer_label(i, layers[i]));
    trace.acts.push_back(std::move(out));
  }
  return trace;
}

std::vector<double> backward(const NetworkModel& model, const ForwardTrace& trace,
                             std::span<const double> grad_out, ParamGrads* params) {
  const auto& layers = model.layers();
  const std::size_t n = layers.size();
  std::vector<std::vector<double>> grads(n + 1);
  grads[n].assign(grad_out.begin(), grad_out.end());

  for (std::size_t li = n; li-- > 0;) {
    std::vector<double>& gout = grads[li + 1];
    const std::vector<double>& in = trace.acts[li];
    const std::vector<double>& out = trace.acts[li + 1];
    std::vector<double> gin;
    std::visit(
        overloaded{
            [&](const DenseLayer& d) {
              const std::size_t rows = d.weight.shape()[0];
              const std::size_t cols = d.weight.shape()[1];
              gin.assign(cols, 0.0);
              const double* w = d.weight.values().data();
              for (std::size_t o = 0; o < rows; ++o) {
                const double g = gout[o];
                if (g == 0.0) continue;
                const double* row = w + o * cols;
                for (std::size_t i = 0; i < cols; ++i) gin[i] += row[i] * g;
                if (params) {
                  params->bias[li][o] += g;
                  double* dw = params->weight[li].values().data() + o * cols;
                  for (std::size_t i = 0; i < cols; ++i) dw[i] += in[i] * g;
                }
              }
            },
            [&](const Conv2dLayer& c) {
              conv_backward(c, model.activation_shape(li), model.activation_shape(li + 1), in, gout,
                            gin, params ? &params->weight[li] : nullptr,
                            params ? &params->bias[li] : nullptr);
            },
            [&](const ReluLayer&) {
              gin = gout;
              for (std::size_t j = 0; j < gin.size(); ++j)
                if (!(in[j] > 0.0)) gin[j] = 0.0;
            },
            [&](const SigmoidLayer&) {
              gin = gout;
              for (std::size_t j = 0; j < gin.size(); ++j) gin[j] *= out[j] * (1.0 - out[j]);
            },
            [&](const FlattenLayer&) { gin = gout; },
            [&](const ResidualAddLayer& r) {
              gin = gout;
              auto& src = grads[std::size_t(r.from + 1)];
              if (std::size_t(r.from + 1) == li) {
                for (std::size_t j = 0; j < gin.size(); ++j) gin[j] += gout[j];
              } else {
                if (src.empty()) src.assign(gout.size(), 0.0);
                for (std::size_t j = 0; j < gout.size(); ++j) src[j] += gout[j];
              }
            }},
        layers[li]);
    std::vector<double>& dst = grads[li];
    if (dst.empty()) {
      dst = std::move(gin);
    } else {
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += gin[j];
    }
    gout.clear();
    gout.shrink_to_fit();
  }
  return std::move(grads[0]);
}

}  // namespace detail

Scores forward(const NetworkModel& model, const Tensor& x) {
  auto trace = detail::forward_trace(model, x);
  Scores s;
  s.values = std::move(trace.acts.back());
  s.predicted_label = argmax(s.values);
  return s;
}

Tensor input_gradient(const NetworkModel& model, const Tensor& x, std::size_t k) {
  if (k >= model.num_classes())
    throw InputError("class index " + std::to_string(k) + " out of range for " +
                     std::to_string(model.num_classes()) + " classes");
  std::vector<double> weights(model.num_classes(), 0.0);
  weights[k] = 1.0;
  return weighted_score_gradient(model, x, weights).second;
}

ScoreDiff score_diff_gradient(const NetworkModel& model, const Tensor& x, std::size_t k,
                              std::size_t base) {
  const std::size_t K = model.num_classes();
  if (k >= K || base >= K) throw InputError("class index out of range");
  if (k == base) throw InputError("score difference needs two distinct classes");
  std::vector<double> weights(K, 0.0);
  weights[k] = 1.0;
  weights[base] = -1.0;
  auto [scores, grad] = weighted_score_gradient(model, x, weights);
  return {scores.values[k] - scores.values[base], std::move(grad)};
}

Jacobian jacobian(const NetworkModel& model, const Tensor& x) {
  auto trace = detail::forward_trace(model, x);
  Jacobian j;
  j.scores.values = trace.acts.back();
  j.scores.predicted_label = argmax(j.scores.values);
  std::vector<double> seed(model.num_classes(), 0.0);
  for (std::size_t k = 0; k < model.num_classes(); ++k) {
    seed.assign(seed.size(), 0.0);
    seed[k] = 1.0;
    j.rows.emplace_back(x.shape(), detail::backward(model, trace, seed));
  }
  return j;
}

std::pair<Scores, Tensor> weighted_score_gradient(const NetworkModel& model, const Tensor& x,
                                                  std::span<const double> weights) {
  if (weights.size() != model.num_classes())
    throw InputError("weight vector length does not match num_classes");
  auto trace = detail::forward_trace(model, x);
  Scores s;
  s.values = trace.acts.back();
  s.predicted_label = argmax(s.values);
  Tensor grad(x.shape(), detail::backward(model, trace, weights));
  return {std::move(s), std::move(grad)};
}

}  // namespace maskadv
