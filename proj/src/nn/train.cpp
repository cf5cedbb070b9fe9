#include "apg/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <type_traits>

#include "apg/error.hpp"
#include "engine.hpp"

namespace apg::nn {
namespace {

void he_uniform(std::vector<float>& weights, std::size_t fan_in, std::mt19937_64& rng) {
  const auto limit = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
  std::uniform_real_distribution<float> dist(-limit, limit);
  for (auto& w : weights) w = dist(rng);
}

Dense make_dense(std::uint32_t in, std::uint32_t out, std::mt19937_64& rng) {
  Dense d{in, out, std::vector<float>(std::size_t{in} * out), std::vector<float>(out, 0.0f)};
  he_uniform(d.weights, in, rng);
  return d;
}

Conv2D make_conv(Shape in, std::uint32_t out_channels, std::uint32_t kernel, std::mt19937_64& rng) {
  Conv2D c{in, out_channels, kernel, {}, std::vector<float>(out_channels, 0.0f)};
  c.weights.resize(std::size_t{out_channels} * c.fan_in());
  he_uniform(c.weights, c.fan_in(), rng);
  return c;
}

struct AdamSlot {
  std::vector<float> m;
  std::vector<float> v;
};

class Adam {
 public:
  Adam(const Network& net, const TrainConfig& cfg) : cfg_(cfg) {
    const auto layers = net.layers();
    weights_.resize(layers.size());
    bias_.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
      std::visit(
          [&](const auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Conv2D> || std::is_same_v<T, Dense>) {
              weights_[i] = {std::vector<float>(l.weights.size()), std::vector<float>(l.weights.size())};
              bias_[i] = {std::vector<float>(l.bias.size()), std::vector<float>(l.bias.size())};
            }
          },
          layers[i]);
    }
  }

  void step(Network& net, const detail::ParamGrads& grads) {
    ++t_;
    const auto b1 = static_cast<float>(cfg_.beta1);
    const auto b2 = static_cast<float>(cfg_.beta2);
    const auto correction1 = static_cast<float>(1.0 - std::pow(cfg_.beta1, static_cast<double>(t_)));
    const auto correction2 = static_cast<float>(1.0 - std::pow(cfg_.beta2, static_cast<double>(t_)));
    const auto lr = static_cast<float>(cfg_.learning_rate);
    const auto eps = static_cast<float>(cfg_.epsilon);

    auto update = [&](std::vector<float>& params, const std::vector<float>& g, AdamSlot& slot) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        slot.m[i] = b1 * slot.m[i] + (1.0f - b1) * g[i];
        slot.v[i] = b2 * slot.v[i] + (1.0f - b2) * g[i] * g[i];
        const float m_hat = slot.m[i] / correction1;
        const float v_hat = slot.v[i] / correction2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      }
    };

    auto& layers = net.mutable_layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
      std::visit(
          [&](auto& l) {
            using T = std::decay_t<decltype(l)>;
            if constexpr (std::is_same_v<T, Conv2D> || std::is_same_v<T, Dense>) {
              update(l.weights, grads.weights[i], weights_[i]);
              update(l.bias, grads.bias[i], bias_[i]);
            }
          },
          layers[i]);
    }
  }

 private:
  TrainConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<AdamSlot> weights_;
  std::vector<AdamSlot> bias_;
};

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ArgumentError("epochs", "must be at least 1");
  if (cfg.batch_size < 1) throw ArgumentError("batch_size", "must be at least 1");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ArgumentError("learning_rate", "must be positive");
  }
}

}  // namespace

Dataset Dataset::slice(std::size_t first, std::size_t count) const {
  first = std::min(first, size());
  count = std::min(count, size() - first);
  Dataset out;
  out.features = features;
  out.split = split;
  out.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(first * features),
                    pixels.begin() + static_cast<std::ptrdiff_t>((first + count) * features));
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(first),
                    labels.begin() + static_cast<std::ptrdiff_t>(first + count));
  return out;
}

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Network make_network(Architecture arch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  const Shape image{1, static_cast<std::uint32_t>(kImageSide), static_cast<std::uint32_t>(kImageSide)};
  constexpr auto classes = static_cast<std::uint32_t>(kClasses);
  if (arch == Architecture::cnn) {
    Conv2D c1 = make_conv(image, 32, 5, rng);
    const Shape s1 = c1.output();
    layers.emplace_back(std::move(c1));
    layers.emplace_back(Relu{s1});
    MaxPool2D p1{s1, 2};
    const Shape s2 = p1.output();
    layers.emplace_back(p1);
    Conv2D c2 = make_conv(s2, 64, 5, rng);
    const Shape s3 = c2.output();
    layers.emplace_back(std::move(c2));
    layers.emplace_back(Relu{s3});
    MaxPool2D p2{s3, 2};
    const Shape s4 = p2.output();
    layers.emplace_back(p2);
    layers.emplace_back(make_dense(static_cast<std::uint32_t>(s4.size()), 1024, rng));
    layers.emplace_back(Relu{{1024, 1, 1}});
    layers.emplace_back(make_dense(1024, classes, rng));
  } else {
    layers.emplace_back(make_dense(static_cast<std::uint32_t>(kFeatures), 256, rng));
    layers.emplace_back(Relu{{256, 1, 1}});
    layers.emplace_back(make_dense(256, 256, rng));
    layers.emplace_back(Relu{{256, 1, 1}});
    layers.emplace_back(make_dense(256, classes, rng));
  }
  layers.emplace_back(Softmax{classes});
  return Network(std::move(layers));
}

Network train(const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  return train(make_network(cfg.architecture, cfg.rng_seed), data, cfg, on_epoch);
}

Network train(Network net, const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  validate(cfg);
  if (data.empty()) throw ArgumentError("data", "training set is empty");
  if (data.features != net.input_size()) {
    throw ConfigError("dataset has " + std::to_string(data.features) +
                      " features, network expects " + std::to_string(net.input_size()));
  }

  // Separate stream from the initialiser so shuffling does not depend on layer sizes.
  std::mt19937_64 shuffle_rng(cfg.rng_seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  Adam optimizer(net, cfg);
  detail::ParamGrads grads;
  detail::Trace trace;
  const auto classes = static_cast<Eigen::Index>(net.num_classes());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> rows(order.data() + start, count);
      const detail::Matrix input = detail::pack_batch(data.pixels, data.features, rows);

      detail::Matrix z;
      try {
        z = detail::forward_logits(net, input, &trace);
      } catch (const NumericalError& e) {
        throw TrainingError("activations diverged in epoch " + std::to_string(epoch + 1) + ": " +
                            e.what());
      }
      detail::Matrix seed = detail::softmax_columns(z);
      for (std::size_t b = 0; b < count; ++b) {
        const auto col = static_cast<Eigen::Index>(b);
        const Eigen::Index label = data.labels[rows[b]];
        if (label >= classes) throw DataError("label out of range");
        Eigen::Index predicted = 0;
        seed.col(col).maxCoeff(&predicted);
        if (predicted == label) ++correct;
        loss_sum -= std::log(std::max(static_cast<double>(seed(label, col)), 1e-30));
        seed(label, col) -= 1.0f;
      }
      if (!std::isfinite(loss_sum)) {
        throw TrainingError("loss diverged in epoch " + std::to_string(epoch + 1));
      }
      seed /= static_cast<float>(count);

      grads.reset(net);
      try {
        detail::backward(net, trace, std::move(seed), &grads);
      } catch (const NumericalError& e) {
        throw TrainingError(std::string("gradient diverged: ") + e.what());
      }
      optimizer.step(net, grads);
    }

    if (on_epoch) {
      on_epoch({epoch + 1, loss_sum / static_cast<double>(data.size()),
                static_cast<double>(correct) / static_cast<double>(data.size())});
    }
  }
  return net;
}

std::vector<std::uint8_t> predict_all(const Network& net, const Dataset& data) {
  if (data.features != net.input_size()) {
    throw ConfigError("dataset has " + std::to_string(data.features) +
                      " features, network expects " + std::to_string(net.input_size()));
  }
  constexpr std::size_t kChunk = 256;
  std::vector<std::uint8_t> out(data.size());
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, data.size() - start);
    rows.resize(count);
    std::iota(rows.begin(), rows.end(), start);
    const detail::Matrix z =
        detail::forward_logits(net, detail::pack_batch(data.pixels, data.features, rows), nullptr);
    for (std::size_t b = 0; b < count; ++b) {
      Eigen::Index best = 0;
      z.col(static_cast<Eigen::Index>(b)).maxCoeff(&best);
      out[start + b] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

double evaluate(const Network& net, const Dataset& data) {
  if (data.empty()) throw ArgumentError("data", "cannot evaluate on an empty dataset");
  const auto predicted = predict_all(net, data);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predicted[i] == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace apg::nn
