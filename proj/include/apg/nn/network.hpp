#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "apg/nn/layers.hpp"

namespace apg::nn {

/// Flattened row-major image, one intensity in [0, 1] per feature.
using Image = std::vector<float>;
/// Softmax output, one probability per class.
using ClassProbs = std::vector<float>;
using Logits = std::vector<float>;

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kFeatures = kImageSide * kImageSide;
inline constexpr std::size_t kClasses = 10;

/// Which output the forward derivative is taken of.
enum class JacobianMode {
  probabilities,
  logits,
};

/// C x M matrix of d output_j / d x_i, stored row-major.
class Jacobian {
 public:
  Jacobian() = default;
  Jacobian(std::size_t classes, std::size_t features)
      : classes_(classes), features_(features), values_(classes * features, 0.0f) {}

  std::size_t classes() const noexcept { return classes_; }
  std::size_t features() const noexcept { return features_; }

  float operator()(std::size_t cls, std::size_t feature) const {
    return values_[cls * features_ + feature];
  }
  float& operator()(std::size_t cls, std::size_t feature) {
    return values_[cls * features_ + feature];
  }

  std::span<const float> row(std::size_t cls) const {
    return {values_.data() + cls * features_, features_};
  }
  std::span<float> row(std::size_t cls) { return {values_.data() + cls * features_, features_}; }

  std::span<const float> values() const noexcept { return values_; }

 private:
  std::size_t classes_ = 0;
  std::size_t features_ = 0;
  std::vector<float> values_;
};

/// Immutable feed-forward classifier built from an ordered layer list.
///
/// The last layer is always Softmax; everything before it computes the logits.
/// All evaluation methods are const and keep no mutable state, so one instance
/// can be shared across threads.
class Network {
 public:
  Network() = default;
  /// Throws ConfigError if consecutive layer shapes do not compose, weight
  /// array sizes are wrong, or the stack does not end in a Softmax.
  explicit Network(std::vector<Layer> layers);

  std::span<const Layer> layers() const noexcept { return layers_; }
  std::vector<Layer>& mutable_layers() noexcept { return layers_; }

  std::size_t input_size() const noexcept { return input_size_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  bool empty() const noexcept { return layers_.empty(); }

  Logits logits(std::span<const float> x) const;
  ClassProbs forward(std::span<const float> x) const;

  /// Forward derivative of the softmax outputs (or logits) with respect to the
  /// input, one reverse-mode sweep per output class.
  Jacobian jacobian(std::span<const float> x,
                    JacobianMode mode = JacobianMode::probabilities) const;

  /// Gradient of cross-entropy(forward(x), one_hot(label)) with respect to x.
  std::vector<float> input_gradient(std::span<const float> x, std::size_t label) const;

  std::size_t parameter_count() const;

  friend bool operator==(const Network& a, const Network& b);

 private:
  std::vector<Layer> layers_;
  std::size_t input_size_ = 0;
  std::size_t num_classes_ = 0;
};

ClassProbs softmax(std::span<const float> logits);
std::size_t argmax(std::span<const float> values);

/// Throws ConfigError unless `x` has exactly `expected` finite entries in [0, 1].
void validate_image(std::span<const float> x, std::size_t expected);

}  // namespace apg::nn
