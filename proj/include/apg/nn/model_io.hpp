#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "apg/nn/network.hpp"

namespace apg::nn {

inline constexpr std::uint32_t kModelFormatVersion = 1;

// Model file layout (all integers little-endian, no padding):
//
//   "APGM" | u32 version | u32 layer_count
//   per layer: u8 kind | u32 rank | rank x u32 dims | f32 weights... | f32 bias...
//
// dims per kind:
//   conv     [in_channels, in_height, in_width, out_channels, kernel]
//   max_pool [channels, height, width, window]
//   dense    [inputs, outputs]
//   relu     [channels, height, width]
//   softmax  [classes]
//
// Weights and biases are present only for conv and dense, in the row-major
// order documented on Conv2D / Dense.

std::vector<std::uint8_t> serialize_model(const Network& net);

/// Throws FormatError naming the offending field on bad magic, version,
/// kind tag, dims, truncation or trailing bytes.
Network deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

}  // namespace apg::nn
