#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "apg/nn/network.hpp"

namespace apg::mnist {

inline constexpr std::uint32_t kImageMagic = 2051;
inline constexpr std::uint32_t kLabelMagic = 2049;

/// Big-endian IDX header.
struct IdxHeader {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
};

/// Parses and checks the header; dims must account for every payload byte.
IdxHeader parse_idx_header(std::span<const std::uint8_t> bytes);

/// Pixels as v / 255, row-major 28x28 per image, concatenated.
/// FormatError (with byte offset) on bad magic, wrong dims or truncation.
std::vector<float> parse_idx_images(std::span<const std::uint8_t> bytes);

/// Same as parse_idx_images, split into one vector per image.
std::vector<nn::Image> parse_idx_image_list(std::span<const std::uint8_t> bytes);

/// FormatError on bad magic, truncation, or a label above 9.
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

/// Inverse of parse_idx_images for values that are exact multiples of 1/255.
std::vector<std::uint8_t> serialize_idx_images(std::span<const float> pixels, std::uint32_t count);
std::vector<std::uint8_t> serialize_idx_labels(std::span<const std::uint8_t> labels);

}  // namespace apg::mnist
