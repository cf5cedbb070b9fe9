#include "apg/nn/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>

#include "apg/error.hpp"
#include "engine.hpp"

namespace apg::nn {
namespace {

std::string describe(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

void validate_layer(const Layer& layer, std::size_t index) {
  const auto fail = [index](const std::string& msg) {
    throw ConfigError("layer " + std::to_string(index) + ": " + msg);
  };
  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Conv2D>) {
          if (l.kernel == 0 || l.kernel % 2 == 0) fail("conv kernel must be odd");
          if (l.out_channels == 0 || l.input.size() == 0) fail("conv has an empty shape");
          if (l.weights.size() != std::size_t{l.out_channels} * l.fan_in()) {
            fail("conv weight count mismatch");
          }
          if (l.bias.size() != l.out_channels) fail("conv bias count mismatch");
        } else if constexpr (std::is_same_v<T, MaxPool2D>) {
          if (l.window == 0 || l.input.height % l.window != 0 || l.input.width % l.window != 0) {
            fail("pool window must divide " + describe(l.input));
          }
        } else if constexpr (std::is_same_v<T, Dense>) {
          if (l.inputs == 0 || l.outputs == 0) fail("dense has an empty shape");
          if (l.weights.size() != std::size_t{l.inputs} * l.outputs) {
            fail("dense weight count mismatch");
          }
          if (l.bias.size() != l.outputs) fail("dense bias count mismatch");
        } else if constexpr (std::is_same_v<T, Relu>) {
          if (l.input.size() == 0) fail("relu has an empty shape");
        } else {
          if (l.size < 2) fail("softmax needs at least two classes");
        }
      },
      layer);
}

// Flat layers (dense, softmax) accept any input with the same element count.
bool composes(const Shape& produced, const Layer& next) {
  const Shape wanted = input_shape(next);
  if (std::holds_alternative<Dense>(next) || std::holds_alternative<Softmax>(next)) {
    return produced.size() == wanted.size();
  }
  if (std::holds_alternative<Relu>(next)) return produced.size() == wanted.size();
  return produced == wanted;
}

detail::Matrix column(std::span<const float> x) {
  detail::Matrix m(static_cast<Eigen::Index>(x.size()), 1);
  std::copy(x.begin(), x.end(), m.data());
  return m;
}

}  // namespace

LayerKind kind_of(const Layer& layer) {
  return std::visit(
      [](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Conv2D>) return LayerKind::conv;
        else if constexpr (std::is_same_v<T, MaxPool2D>) return LayerKind::max_pool;
        else if constexpr (std::is_same_v<T, Dense>) return LayerKind::dense;
        else if constexpr (std::is_same_v<T, Relu>) return LayerKind::relu;
        else return LayerKind::softmax;
      },
      layer);
}

Shape input_shape(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> Shape {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Dense>) return {l.inputs, 1, 1};
        else if constexpr (std::is_same_v<T, Softmax>) return {l.size, 1, 1};
        else return l.input;
      },
      layer);
}

Shape output_shape(const Layer& layer) {
  return std::visit([](const auto& l) { return l.output(); }, layer);
}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("network has no layers");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    validate_layer(layers_[i], i);
    const bool last = i + 1 == layers_.size();
    if (std::holds_alternative<Softmax>(layers_[i]) != last) {
      throw ConfigError("layer " + std::to_string(i) +
                        ": softmax must be the final layer and only the final layer");
    }
    if (!last && !composes(output_shape(layers_[i]), layers_[i + 1])) {
      throw ConfigError("layer " + std::to_string(i) + " outputs " +
                        describe(output_shape(layers_[i])) + " but layer " +
                        std::to_string(i + 1) + " expects " +
                        describe(input_shape(layers_[i + 1])));
    }
  }
  input_size_ = input_shape(layers_.front()).size();
  num_classes_ = output_shape(layers_.back()).size();
}

Logits Network::logits(std::span<const float> x) const {
  validate_image(x, input_size_);
  const detail::Matrix z = detail::forward_logits(*this, column(x), nullptr);
  return {z.data(), z.data() + z.size()};
}

ClassProbs Network::forward(std::span<const float> x) const { return softmax(logits(x)); }

Jacobian Network::jacobian(std::span<const float> x, JacobianMode mode) const {
  validate_image(x, input_size_);
  detail::Trace trace;
  const detail::Matrix z = detail::forward_logits(*this, column(x), &trace);
  const auto classes = static_cast<Eigen::Index>(num_classes_);

  // Column j seeds the sweep for output j with d output_j / d logits.
  detail::Matrix seeds;
  if (mode == JacobianMode::logits) {
    seeds = detail::Matrix::Identity(classes, classes);
  } else {
    const ClassProbs p = softmax(std::span<const float>(z.data(), num_classes_));
    seeds.resize(classes, classes);
    for (Eigen::Index j = 0; j < classes; ++j) {
      for (Eigen::Index k = 0; k < classes; ++k) {
        const auto pj = p[static_cast<std::size_t>(j)];
        const auto pk = p[static_cast<std::size_t>(k)];
        seeds(k, j) = pj * ((j == k ? 1.0f : 0.0f) - pk);
      }
    }
  }
  const detail::Matrix grads = detail::backward(*this, trace, std::move(seeds), nullptr);

  Jacobian out(num_classes_, input_size_);
  for (std::size_t j = 0; j < num_classes_; ++j) {
    const auto col = grads.col(static_cast<Eigen::Index>(j));
    std::copy(col.data(), col.data() + col.size(), out.row(j).begin());
  }
  return out;
}

std::vector<float> Network::input_gradient(std::span<const float> x, std::size_t label) const {
  if (label >= num_classes_) {
    throw ArgumentError("label", "class " + std::to_string(label) + " out of range");
  }
  validate_image(x, input_size_);
  detail::Trace trace;
  const detail::Matrix z = detail::forward_logits(*this, column(x), &trace);
  const ClassProbs p = softmax(std::span<const float>(z.data(), num_classes_));
  detail::Matrix seed(static_cast<Eigen::Index>(num_classes_), 1);
  for (std::size_t j = 0; j < num_classes_; ++j) {
    seed(static_cast<Eigen::Index>(j), 0) = p[j] - (j == label ? 1.0f : 0.0f);
  }
  const detail::Matrix g = detail::backward(*this, trace, std::move(seed), nullptr);
  return {g.data(), g.data() + g.size()};
}

std::size_t Network::parameter_count() const {
  std::size_t total = 0;
  for (const auto& layer : layers_) {
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2D> || std::is_same_v<T, Dense>) {
            total += l.weights.size() + l.bias.size();
          }
        },
        layer);
  }
  return total;
}

bool operator==(const Network& a, const Network& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const bool same = std::visit(
        [&](const auto& la) {
          using T = std::decay_t<decltype(la)>;
          const auto* lb = std::get_if<T>(&b.layers_[i]);
          if (lb == nullptr) return false;
          if constexpr (std::is_same_v<T, Conv2D>) {
            return la.input == lb->input && la.out_channels == lb->out_channels &&
                   la.kernel == lb->kernel && la.weights == lb->weights && la.bias == lb->bias;
          } else if constexpr (std::is_same_v<T, MaxPool2D>) {
            return la.input == lb->input && la.window == lb->window;
          } else if constexpr (std::is_same_v<T, Dense>) {
            return la.inputs == lb->inputs && la.outputs == lb->outputs &&
                   la.weights == lb->weights && la.bias == lb->bias;
          } else if constexpr (std::is_same_v<T, Relu>) {
            return la.input == lb->input;
          } else {
            return la.size == lb->size;
          }
        },
        a.layers_[i]);
    if (!same) return false;
  }
  return true;
}

ClassProbs softmax(std::span<const float> logits) {
  ClassProbs out(logits.size());
  if (logits.empty()) return out;
  const float top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double e = std::exp(static_cast<double>(logits[i]) - top);
    out[i] = static_cast<float>(e);
    total += e;
  }
  for (auto& v : out) v = static_cast<float>(v / total);
  return out;
}

std::size_t argmax(std::span<const float> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

void validate_image(std::span<const float> x, std::size_t expected) {
  if (x.size() != expected) {
    throw ConfigError("input has " + std::to_string(x.size()) + " features, model expects " +
                      std::to_string(expected));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= 0.0f && x[i] <= 1.0f)) {
      throw ArgumentError("pixels", "feature " + std::to_string(i) + " outside [0, 1]");
    }
  }
}

}  // namespace apg::nn
