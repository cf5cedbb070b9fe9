#pragma once

// Batched forward/backward kernels shared by inference, the Jacobian and the
// trainer. Activations are (features x batch) column-major matrices; each
// column holds one sample in channel-major order.

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "apg/nn/network.hpp"

namespace apg::nn::detail {

using Matrix = Eigen::MatrixXf;
using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LayerCache {
  Matrix input;                      // layer input (relu, dense)
  Matrix columns;                    // im2col patches (conv)
  std::vector<std::uint32_t> argmax; // winning input row per (output row, sample) (pool)
};

struct Trace {
  std::vector<LayerCache> layers;
  std::size_t batch = 0;
};

/// Gradients for every layer, in layer order; empty vectors for parameter-free layers.
struct ParamGrads {
  std::vector<std::vector<float>> weights;
  std::vector<std::vector<float>> bias;

  void reset(const Network& net);
};

/// Runs every layer except the final softmax. Returns logits (classes x batch).
/// When `trace` is non-null it receives what the backward pass needs.
Matrix forward_logits(const Network& net, const Matrix& input, Trace* trace);

/// Propagates d(objective)/d(logits) back to the input.
///
/// `grad` may have more columns than the traced batch only when the trace
/// holds a single sample; the cached activations are then shared by every
/// column (this is how the per-class Jacobian sweeps run in one pass).
/// Parameter gradients are accumulated into `grads` when it is non-null.
Matrix backward(const Network& net, const Trace& trace, Matrix grad, ParamGrads* grads);

/// Column-wise softmax.
Matrix softmax_columns(const Matrix& logits);

/// Copies `count` consecutive images (rows of a row-major pixel buffer) into a
/// (features x count) matrix.
Matrix pack_batch(std::span<const float> pixels, std::size_t features,
                  std::span<const std::size_t> rows);

}  // namespace apg::nn::detail
