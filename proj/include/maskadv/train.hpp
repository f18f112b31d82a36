#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "maskadv/network.hpp"

namespace maskadv {

// Plain minibatch SGD with momentum on softmax cross-entropy. Only used to
// produce desk-scale fixture models.
struct SgdConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct TrainingReport {
  std::vector<double> epoch_loss;
};

TrainingReport train_sgd(NetworkModel& model, std::span<const Tensor> images,
                         std::span<const std::size_t> labels, const SgdConfig& cfg);

double accuracy(const NetworkModel& model, std::span<const Tensor> images,
                std::span<const std::size_t> labels);

// flatten -> (dense -> relu)* -> dense, He-uniform initialised.
NetworkModel make_mlp(const Shape& input_shape, InputRange range, std::span<const std::size_t> hidden,
                      std::size_t num_classes, std::uint64_t seed);

// (conv -> relu)* -> flatten -> dense, He-uniform initialised.
struct ConvSpec {
  std::size_t channels;
  std::size_t kernel;
  std::size_t stride;
  std::size_t padding;
};

NetworkModel make_cnn(const Shape& input_shape, InputRange range, std::span<const ConvSpec> convs,
                      std::size_t num_classes, std::uint64_t seed);

}  // namespace maskadv
