#pragma once

#include <cstddef>
#include <cstdint>
#include <variant>
#include <vector>

namespace apg::nn {

/// Channel-major activation shape. Flat vectors use {n, 1, 1}.
struct Shape {
  std::uint32_t channels = 0;
  std::uint32_t height = 1;
  std::uint32_t width = 1;

  constexpr std::size_t size() const noexcept {
    return std::size_t{channels} * height * width;
  }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

/// Tag byte used by the model file.
enum class LayerKind : std::uint8_t {
  conv = 1,
  max_pool = 2,
  dense = 3,
  relu = 4,
  softmax = 5,
};

/// 2-D convolution, stride 1, zero "same" padding (odd kernel).
/// weights: [out_channels][in.channels][kernel][kernel], bias: [out_channels].
struct Conv2D {
  Shape input;
  std::uint32_t out_channels = 0;
  std::uint32_t kernel = 0;
  std::vector<float> weights;
  std::vector<float> bias;

  Shape output() const { return {out_channels, input.height, input.width}; }
  std::size_t fan_in() const { return std::size_t{input.channels} * kernel * kernel; }
};

/// Non-overlapping max pooling with a square window; spatial size must divide evenly.
struct MaxPool2D {
  Shape input;
  std::uint32_t window = 2;

  Shape output() const {
    return {input.channels, input.height / window, input.width / window};
  }
};

/// Fully connected layer. weights: [outputs][inputs] row-major.
struct Dense {
  std::uint32_t inputs = 0;
  std::uint32_t outputs = 0;
  std::vector<float> weights;
  std::vector<float> bias;

  Shape output() const { return {outputs, 1, 1}; }
};

struct Relu {
  Shape input;
  Shape output() const { return input; }
};

/// Terminal normalisation; everything before it produces logits.
struct Softmax {
  std::uint32_t size = 0;
  Shape output() const { return {size, 1, 1}; }
};

using Layer = std::variant<Conv2D, MaxPool2D, Dense, Relu, Softmax>;

LayerKind kind_of(const Layer& layer);
Shape input_shape(const Layer& layer);
Shape output_shape(const Layer& layer);

}  // namespace apg::nn
