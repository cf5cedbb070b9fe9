#pragma once

#include <cstdint>
#include <functional>

#include "apg/nn/dataset.hpp"
#include "apg/nn/network.hpp"

namespace apg::nn {

enum class Architecture {
  /// conv5x5(32) relu pool2 conv5x5(64) relu pool2 dense(1024) relu dense(10) softmax
  cnn,
  /// dense(256) relu dense(256) relu dense(10) softmax; minutes to train on one core
  mlp,
};

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t rng_seed = 1;
  Architecture architecture = Architecture::cnn;
  // Adam moments.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct EpochReport {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Fresh network for MNIST-shaped input (1x28x28, 10 classes) with seeded
/// uniform He-style weights and zero biases.
Network make_network(Architecture arch, std::uint64_t seed);

/// Minibatch Adam on softmax cross-entropy. Bit-identical result for a fixed
/// rng_seed on the same build. Throws TrainingError if the loss goes non-finite.
Network train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Continues training an existing network.
Network train(Network initial, const Dataset& data, const TrainConfig& cfg,
              const EpochCallback& on_epoch = {});

/// Fraction of samples whose argmax prediction equals the label.
double evaluate(const Network& net, const Dataset& data);

/// argmax prediction for every sample, evaluated in batches.
std::vector<std::uint8_t> predict_all(const Network& net, const Dataset& data);

}  // namespace apg::nn
