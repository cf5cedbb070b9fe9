#include "engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <type_traits>

#include "apg/error.hpp"

namespace apg::nn::detail {
namespace {

using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;
using VecMap = Eigen::Map<const Eigen::VectorXf>;

void check_finite(const Matrix& m, std::size_t layer, const char* what) {
  if (!m.allFinite()) {
    throw NumericalError(layer, std::string("non-finite ") + what);
  }
}

// Patch matrix: row (c, ky, kx), column (sample, y, x).
Matrix im2col(const Conv2D& conv, const Matrix& input) {
  const auto channels = static_cast<int>(conv.input.channels);
  const auto height = static_cast<int>(conv.input.height);
  const auto width = static_cast<int>(conv.input.width);
  const auto k = static_cast<int>(conv.kernel);
  const int pad = k / 2;
  const Eigen::Index plane = Eigen::Index{height} * width;
  const auto batch = input.cols();

  Matrix cols = Matrix::Zero(Eigen::Index{channels} * k * k, plane * batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const float* src = input.col(b).data();
    for (int c = 0; c < channels; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const Eigen::Index row = (Eigen::Index{c} * k + ky) * k + kx;
          for (int y = 0; y < height; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= height) continue;
            const float* src_row = src + (Eigen::Index{c} * height + sy) * width;
            const Eigen::Index col_base = b * plane + Eigen::Index{y} * width;
            const int x_lo = std::max(0, pad - kx);
            const int x_hi = std::min(width, width + pad - kx);
            for (int x = x_lo; x < x_hi; ++x) {
              cols(row, col_base + x) = src_row[x + kx - pad];
            }
          }
        }
      }
    }
  }
  return cols;
}

// Inverse of im2col, summing overlaps. Takes the patch gradient transposed:
// row (sample, y, x), column (c, ky, kx).
Matrix col2im(const Conv2D& conv, const Matrix& cols_t, Eigen::Index batch) {
  const auto channels = static_cast<int>(conv.input.channels);
  const auto height = static_cast<int>(conv.input.height);
  const auto width = static_cast<int>(conv.input.width);
  const auto k = static_cast<int>(conv.kernel);
  const int pad = k / 2;
  const Eigen::Index plane = Eigen::Index{height} * width;

  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(conv.input.size()), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    float* dst = out.col(b).data();
    for (int c = 0; c < channels; ++c) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const Eigen::Index row = (Eigen::Index{c} * k + ky) * k + kx;
          const float* src = cols_t.col(row).data() + b * plane;
          for (int y = 0; y < height; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= height) continue;
            float* dst_row = dst + (Eigen::Index{c} * height + sy) * width;
            const float* src_row = src + Eigen::Index{y} * width;
            const int x_lo = std::max(0, pad - kx);
            const int x_hi = std::min(width, width + pad - kx);
            for (int x = x_lo; x < x_hi; ++x) {
              dst_row[x + kx - pad] += src_row[x];
            }
          }
        }
      }
    }
  }
  return out;
}

Matrix conv_forward(const Conv2D& conv, const Matrix& input, LayerCache* cache) {
  const auto out_channels = static_cast<Eigen::Index>(conv.out_channels);
  const Eigen::Index plane = Eigen::Index{conv.input.height} * conv.input.width;
  const auto batch = input.cols();

  Matrix cols = im2col(conv, input);
  ConstRowMap weights(conv.weights.data(), out_channels, static_cast<Eigen::Index>(conv.fan_in()));
  Matrix product = weights * cols;  // out_channels x (plane * batch)
  product.colwise() += VecMap(conv.bias.data(), out_channels);

  Matrix out(out_channels * plane, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    Eigen::Map<Matrix>(out.col(b).data(), plane, out_channels) =
        product.middleCols(b * plane, plane).transpose();
  }
  if (cache != nullptr) cache->columns = std::move(cols);
  return out;
}

// Fixed column order, whatever the alignment of the destination buffer.
Eigen::VectorXf row_sums(const Matrix& g) {
  Eigen::VectorXf sum = Eigen::VectorXf::Zero(g.rows());
  for (Eigen::Index c = 0; c < g.cols(); ++c) sum += g.col(c);
  return sum;
}

// Input gradient only. Each output position multiplies just the channels whose
// gradient is nonzero there; behind a relu and a pool that is a small share.
Matrix conv_input_gradient(const Conv2D& conv, const Matrix& grad) {
  const auto out_channels = static_cast<Eigen::Index>(conv.out_channels);
  const auto height = static_cast<int>(conv.input.height);
  const auto width = static_cast<int>(conv.input.width);
  const auto k = static_cast<int>(conv.kernel);
  const int pad = k / 2;
  const Eigen::Index plane = Eigen::Index{height} * width;
  const auto fan_in = static_cast<Eigen::Index>(conv.fan_in());
  const auto batch = grad.cols();
  ConstRowMap weights(conv.weights.data(), out_channels, fan_in);

  const RowMatrix rows = grad;  // one contiguous row per (channel, position)
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(conv.input.size()), batch);
  RowMatrix w_active(out_channels, fan_in);
  Matrix g_active(batch, out_channels);
  RowMatrix patch(batch, fan_in);
  for (Eigen::Index p = 0; p < plane; ++p) {
    Eigen::Index n = 0;
    for (Eigen::Index o = 0; o < out_channels; ++o) {
      const auto row = rows.row(o * plane + p);
      if (row.isZero(0.0f)) continue;
      w_active.row(n) = weights.row(o);
      g_active.col(n) = row.transpose();
      ++n;
    }
    if (n == 0) continue;
    patch.noalias() = g_active.leftCols(n) * w_active.topRows(n);

    const int y = static_cast<int>(p / width), x = static_cast<int>(p % width);
    const int ky_lo = std::max(0, pad - y), ky_hi = std::min(k, height + pad - y);
    const int kx_lo = std::max(0, pad - x), kx_hi = std::min(k, width + pad - x);
    for (Eigen::Index b = 0; b < batch; ++b) {
      float* dst = out.col(b).data();
      const float* src = patch.row(b).data();
      for (int c = 0; c < static_cast<int>(conv.input.channels); ++c) {
        for (int ky = ky_lo; ky < ky_hi; ++ky) {
          float* dst_row = dst + (Eigen::Index{c} * height + y + ky - pad) * width + x - pad;
          const float* src_row = src + (Eigen::Index{c} * k + ky) * k;
          for (int kx = kx_lo; kx < kx_hi; ++kx) dst_row[kx] += src_row[kx];
        }
      }
    }
  }
  return out;
}

Matrix conv_backward(const Conv2D& conv, const LayerCache& cache, const Matrix& grad,
                     std::vector<float>* grad_w, std::vector<float>* grad_b) {
  if (grad_w == nullptr && conv.fan_in() >= 128) return conv_input_gradient(conv, grad);
  const auto out_channels = static_cast<Eigen::Index>(conv.out_channels);
  const Eigen::Index plane = Eigen::Index{conv.input.height} * conv.input.width;
  const auto batch = grad.cols();

  Matrix g(out_channels, plane * batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    g.middleCols(b * plane, plane) =
        Eigen::Map<const Matrix>(grad.col(b).data(), plane, out_channels).transpose();
  }
  const auto fan_in = static_cast<Eigen::Index>(conv.fan_in());
  ConstRowMap weights(conv.weights.data(), out_channels, fan_in);
  if (grad_w != nullptr) {
    RowMap(grad_w->data(), out_channels, fan_in).noalias() += g * cache.columns.transpose();
    Eigen::Map<Eigen::VectorXf>(grad_b->data(), out_channels) += row_sums(g);
  }
  const Matrix grad_cols_t = g.transpose() * weights;
  return col2im(conv, grad_cols_t, batch);
}

Matrix pool_forward(const MaxPool2D& pool, const Matrix& input, LayerCache* cache) {
  const Shape out_shape = pool.output();
  const auto rows = static_cast<Eigen::Index>(out_shape.size());
  const auto batch = input.cols();
  const std::uint32_t w = pool.window;
  Matrix out(rows, batch);
  std::vector<std::uint32_t> winners;
  if (cache != nullptr) winners.resize(static_cast<std::size_t>(rows * batch));

  for (Eigen::Index b = 0; b < batch; ++b) {
    const float* src = input.col(b).data();
    for (std::uint32_t c = 0; c < out_shape.channels; ++c) {
      for (std::uint32_t oy = 0; oy < out_shape.height; ++oy) {
        for (std::uint32_t ox = 0; ox < out_shape.width; ++ox) {
          std::uint32_t best = (c * pool.input.height + oy * w) * pool.input.width + ox * w;
          float best_value = src[best];
          for (std::uint32_t dy = 0; dy < w; ++dy) {
            for (std::uint32_t dx = 0; dx < w; ++dx) {
              const std::uint32_t idx =
                  (c * pool.input.height + oy * w + dy) * pool.input.width + ox * w + dx;
              // First maximum in scan order wins ties.
              if (src[idx] > best_value) {
                best_value = src[idx];
                best = idx;
              }
            }
          }
          const Eigen::Index o = (Eigen::Index{c} * out_shape.height + oy) * out_shape.width + ox;
          out(o, b) = best_value;
          if (cache != nullptr) winners[static_cast<std::size_t>(b * rows + o)] = best;
        }
      }
    }
  }
  if (cache != nullptr) cache->argmax = std::move(winners);
  return out;
}

Matrix pool_backward(const MaxPool2D& pool, const LayerCache& cache, const Matrix& grad,
                     std::size_t traced_batch) {
  const auto rows = grad.rows();
  const auto batch = grad.cols();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(pool.input.size()), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::Index cb = traced_batch == 1 ? 0 : b;
    for (Eigen::Index o = 0; o < rows; ++o) {
      out(cache.argmax[static_cast<std::size_t>(cb * rows + o)], b) += grad(o, b);
    }
  }
  return out;
}

Matrix dense_forward(const Dense& dense, const Matrix& input) {
  ConstRowMap weights(dense.weights.data(), dense.outputs, dense.inputs);
  Matrix out = weights * input;
  out.colwise() += VecMap(dense.bias.data(), dense.outputs);
  return out;
}

Matrix dense_backward(const Dense& dense, const LayerCache& cache, const Matrix& grad,
                      std::vector<float>* grad_w, std::vector<float>* grad_b) {
  ConstRowMap weights(dense.weights.data(), dense.outputs, dense.inputs);
  if (grad_w != nullptr) {
    RowMap(grad_w->data(), dense.outputs, dense.inputs).noalias() += grad * cache.input.transpose();
    Eigen::Map<Eigen::VectorXf>(grad_b->data(), dense.outputs) += row_sums(grad);
    return weights.transpose() * grad;
  }
  // Input gradient only: outputs whose gradient is zero in every column (the
  // inactive relu units) are skipped, the rest are gathered in blocks.
  constexpr Eigen::Index kBlock = 32;
  const auto batch = grad.cols();
  Matrix out = Matrix::Zero(dense.inputs, batch);
  RowMatrix w_block(kBlock, dense.inputs);
  Matrix g_block(kBlock, batch);
  Eigen::Index n = 0;
  const auto flush = [&] {
    if (n > 0) out.noalias() += w_block.topRows(n).transpose() * g_block.topRows(n);
    n = 0;
  };
  const RowMatrix rows = grad;
  for (Eigen::Index o = 0; o < rows.rows(); ++o) {
    if (rows.row(o).isZero(0.0f)) continue;
    w_block.row(n) = weights.row(o);
    g_block.row(n) = rows.row(o);
    if (++n == kBlock) flush();
  }
  flush();
  return out;
}

Matrix relu_backward(const LayerCache& cache, Matrix grad, std::size_t traced_batch) {
  for (Eigen::Index b = 0; b < grad.cols(); ++b) {
    const Eigen::Index cb = traced_batch == 1 ? 0 : b;
    grad.col(b).array() *= (cache.input.col(cb).array() > 0.0f).cast<float>();
  }
  return grad;
}

}  // namespace

void ParamGrads::reset(const Network& net) {
  const auto layers = net.layers();
  weights.resize(layers.size());
  bias.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::visit(
        [&](const auto& layer) {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, Conv2D> || std::is_same_v<T, Dense>) {
            weights[i].assign(layer.weights.size(), 0.0f);
            bias[i].assign(layer.bias.size(), 0.0f);
          } else {
            weights[i].clear();
            bias[i].clear();
          }
        },
        layers[i]);
  }
}

Matrix forward_logits(const Network& net, const Matrix& input, Trace* trace) {
  const auto layers = net.layers();
  if (trace != nullptr) {
    trace->layers.assign(layers.size(), LayerCache{});
    trace->batch = static_cast<std::size_t>(input.cols());
  }
  Matrix act = input;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    LayerCache* cache = trace != nullptr ? &trace->layers[i] : nullptr;
    act = std::visit(
        [&](const auto& layer) -> Matrix {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, Conv2D>) {
            return conv_forward(layer, act, cache);
          } else if constexpr (std::is_same_v<T, MaxPool2D>) {
            return pool_forward(layer, act, cache);
          } else if constexpr (std::is_same_v<T, Dense>) {
            if (cache != nullptr) cache->input = act;
            return dense_forward(layer, act);
          } else if constexpr (std::is_same_v<T, Relu>) {
            if (cache != nullptr) cache->input = act;
            return act.cwiseMax(0.0f);
          } else {
            throw ConfigError("softmax may only appear as the final layer");
          }
        },
        layers[i]);
    check_finite(act, i, "activation");
  }
  return act;
}

Matrix backward(const Network& net, const Trace& trace, Matrix grad, ParamGrads* grads) {
  const auto layers = net.layers();
  if (trace.batch != 1 && static_cast<std::size_t>(grad.cols()) != trace.batch) {
    throw ConfigError("gradient batch does not match traced batch");
  }
  for (std::size_t i = layers.size() - 1; i-- > 0;) {
    const LayerCache& cache = trace.layers[i];
    std::vector<float>* gw = grads != nullptr ? &grads->weights[i] : nullptr;
    std::vector<float>* gb = grads != nullptr ? &grads->bias[i] : nullptr;
    grad = std::visit(
        [&](const auto& layer) -> Matrix {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, Conv2D>) {
            return conv_backward(layer, cache, grad, gw, gb);
          } else if constexpr (std::is_same_v<T, MaxPool2D>) {
            return pool_backward(layer, cache, grad, trace.batch);
          } else if constexpr (std::is_same_v<T, Dense>) {
            return dense_backward(layer, cache, grad, gw, gb);
          } else if constexpr (std::is_same_v<T, Relu>) {
            return relu_backward(cache, std::move(grad), trace.batch);
          } else {
            throw ConfigError("softmax may only appear as the final layer");
          }
        },
        layers[i]);
    check_finite(grad, i, "gradient");
  }
  return grad;
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const ClassProbs p = softmax(std::span<const float>(logits.col(b).data(),
                                                        static_cast<std::size_t>(logits.rows())));
    std::copy(p.begin(), p.end(), out.col(b).data());
  }
  return out;
}

Matrix pack_batch(std::span<const float> pixels, std::size_t features,
                  std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(features), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t b = 0; b < rows.size(); ++b) {
    std::copy_n(pixels.data() + rows[b] * features, features,
                out.col(static_cast<Eigen::Index>(b)).data());
  }
  return out;
}

}  // namespace apg::nn::detail
