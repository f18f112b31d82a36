#include "maskadv/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "maskadv/errors.hpp"

namespace maskadv {

namespace {

Tensor he_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

NetworkModel make_mlp(const Shape& input_shape, InputRange range, std::span<const std::size_t> hidden,
                      std::size_t num_classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  layers.emplace_back(FlattenLayer{});
  std::size_t width = shape_size(input_shape);
  for (std::size_t h : hidden) {
    layers.emplace_back(DenseLayer{he_uniform({h, width}, width, rng), Tensor({h}, 0.0)});
    layers.emplace_back(ReluLayer{});
    width = h;
  }
  layers.emplace_back(
      DenseLayer{he_uniform({num_classes, width}, width, rng), Tensor({num_classes}, 0.0)});
  return NetworkModel(input_shape, range, num_classes, std::move(layers));
}

NetworkModel make_cnn(const Shape& input_shape, InputRange range, std::span<const ConvSpec> convs,
                      std::size_t num_classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  ImageDims dims = image_dims(input_shape);
  std::size_t h = dims.height, w = dims.width, c = dims.channels;
  for (const ConvSpec& s : convs) {
    Conv2dLayer conv;
    const std::size_t fan_in = c * s.kernel * s.kernel;
    conv.kernel = he_uniform({s.channels, c, s.kernel, s.kernel}, fan_in, rng);
    conv.bias = Tensor({s.channels}, 0.0);
    conv.stride = {s.stride, s.stride};
    conv.padding = {s.padding, s.padding};
    layers.emplace_back(std::move(conv));
    layers.emplace_back(ReluLayer{});
    h = (h + 2 * s.padding - s.kernel) / s.stride + 1;
    w = (w + 2 * s.padding - s.kernel) / s.stride + 1;
    c = s.channels;
  }
  layers.emplace_back(FlattenLayer{});
  const std::size_t flat = h * w * c;
  layers.emplace_back(DenseLayer{he_uniform({num_classes, flat}, flat, rng), Tensor({num_classes}, 0.0)});
  return NetworkModel(input_shape, range, num_classes, std::move(layers));
}

TrainingReport train_sgd(NetworkModel& model, std::span<const Tensor> images,
                         std::span<const std::size_t> labels, const SgdConfig& cfg) {
  if (images.size() != labels.size() || images.empty())
    throw InputError("training set needs matching, non-empty images and labels");
  if (cfg.batch_size == 0) throw InputError("batch size must be positive");

  auto& layers = model.mutable_layers();
  const std::size_t K = model.num_classes();

  auto zero_grads = [&] {
    detail::ParamGrads g;
    for (const Layer& l : layers) {
      if (const auto* d = std::get_if<DenseLayer>(&l)) {
        g.weight.emplace_back(d->weight.shape(), 0.0);
        g.bias.emplace_back(d->bias.shape(), 0.0);
      } else if (const auto* c = std::get_if<Conv2dLayer>(&l)) {
        g.weight.emplace_back(c->kernel.shape(), 0.0);
        g.bias.emplace_back(c->bias.shape(), 0.0);
      } else {
        g.weight.emplace_back();
        g.bias.emplace_back();
      }
    }
    return g;
  };

  detail::ParamGrads velocity = zero_grads();
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  TrainingReport report;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      detail::ParamGrads grads = zero_grads();
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        if (labels[idx] >= K) throw InputError("label out of range");
        auto trace = detail::forward_trace(model, images[idx]);
        const auto& logits = trace.acts.back();
        const double mx = *std::max_element(logits.begin(), logits.end());
        double denom = 0.0;
        for (double z : logits) denom += std::exp(z - mx);
        std::vector<double> dlogits(K);
        for (std::size_t k = 0; k < K; ++k) dlogits[k] = std::exp(logits[k] - mx) / denom;
        total_loss -= std::log(std::max(dlogits[labels[idx]], 1e-300));
        dlogits[labels[idx]] -= 1.0;
        detail::backward(model, trace, dlogits, &grads);
      }
      const double scale = cfg.learning_rate / double(end - start);
      for (std::size_t li = 0; li < layers.size(); ++li) {
        Tensor* w = nullptr;
        Tensor* bias = nullptr;
        if (auto* d = std::get_if<DenseLayer>(&layers[li])) {
          w = &d->weight;
          bias = &d->bias;
        } else if (auto* c = std::get_if<Conv2dLayer>(&layers[li])) {
          w = &c->kernel;
          bias = &c->bias;
        } else {
          continue;
        }
        auto step = [&](Tensor& param, Tensor& vel, const Tensor& grad) {
          for (std::size_t i = 0; i < param.size(); ++i) {
            vel[i] = cfg.momentum * vel[i] - scale * grad[i];
            param[i] += vel[i];
          }
        };
        step(*w, velocity.weight[li], grads.weight[li]);
        step(*bias, velocity.bias[li], grads.bias[li]);
      }
    }
    report.epoch_loss.push_back(total_loss / double(images.size()));
  }
  return report;
}

double accuracy(const NetworkModel& model, std::span<const Tensor> images,
                std::span<const std::size_t> labels) {
  if (images.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i)
    if (forward(model, images[i]).predicted_label == labels[i]) ++correct;
  return double(correct) / double(images.size());
}

}  // namespace maskadv
