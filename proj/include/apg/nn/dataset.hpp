#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace apg::nn {

enum class Split { train, test };

std::string_view to_string(Split split);

/// Labelled images stored contiguously, one row of `features` floats per sample.
struct Dataset {
  std::size_t features = 0;
  std::vector<float> pixels;
  std::vector<std::uint8_t> labels;
  Split split = Split::train;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }

  std::span<const float> image(std::size_t i) const {
    return {pixels.data() + i * features, features};
  }

  /// Samples [first, first + count), same split.
  Dataset slice(std::size_t first, std::size_t count) const;
};

}  // namespace apg::nn
