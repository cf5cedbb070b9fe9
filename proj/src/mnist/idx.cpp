#include "apg/mnist/idx.hpp"

#include <cmath>
#include <string>

#include "apg/error.hpp"

namespace apg::mnist {
namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (bytes.size() < offset + 4) {
    throw FormatError("idx: truncated header at byte " + std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::size_t header_size(const IdxHeader& h) { return 4 + 4 * h.dims.size(); }

}  // namespace

IdxHeader parse_idx_header(std::span<const std::uint8_t> bytes) {
  IdxHeader h;
  h.magic = read_be32(bytes, 0);
  // Third byte is the element type (0x08 = u8), fourth the dimension count.
  if ((h.magic >> 16) != 0 || ((h.magic >> 8) & 0xFF) != 0x08) {
    throw FormatError("idx: unsupported magic " + std::to_string(h.magic) + " at byte 0");
  }
  const std::uint32_t rank = h.magic & 0xFF;
  if (rank == 0) throw FormatError("idx: zero dimensions declared at byte 3");
  std::size_t payload = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    h.dims.push_back(read_be32(bytes, 4 + 4 * i));
    payload *= h.dims.back();
  }
  const std::size_t expected = header_size(h) + payload;
  if (bytes.size() < expected) {
    throw FormatError("idx: truncated payload, file ends at byte " + std::to_string(bytes.size()) +
                      " but header declares " + std::to_string(expected));
  }
  if (bytes.size() > expected) {
    throw FormatError("idx: unexpected trailing data at byte " + std::to_string(expected));
  }
  return h;
}

std::vector<float> parse_idx_images(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kImageMagic) {
    throw FormatError("idx: expected image magic 2051, found " + std::to_string(magic) +
                      " at byte 0");
  }
  const IdxHeader h = parse_idx_header(bytes);
  if (h.dims.size() != 3 || h.dims[1] != nn::kImageSide || h.dims[2] != nn::kImageSide) {
    throw FormatError("idx: image dims must be [n, 28, 28] (byte 4)");
  }
  const std::size_t offset = header_size(h);
  std::vector<float> pixels(bytes.size() - offset);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = static_cast<float>(bytes[offset + i]) / 255.0f;
  }
  return pixels;
}

std::vector<nn::Image> parse_idx_image_list(std::span<const std::uint8_t> bytes) {
  const std::vector<float> flat = parse_idx_images(bytes);
  std::vector<nn::Image> images(flat.size() / nn::kFeatures);
  for (std::size_t i = 0; i < images.size(); ++i) {
    images[i].assign(flat.begin() + static_cast<std::ptrdiff_t>(i * nn::kFeatures),
                     flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * nn::kFeatures));
  }
  return images;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  const std::uint32_t magic = read_be32(bytes, 0);
  if (magic != kLabelMagic) {
    throw FormatError("idx: expected label magic 2049, found " + std::to_string(magic) +
                      " at byte 0");
  }
  const IdxHeader h = parse_idx_header(bytes);
  const std::size_t offset = header_size(h);
  std::vector<std::uint8_t> labels(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 9) {
      throw FormatError("idx: label " + std::to_string(labels[i]) + " out of range at byte " +
                        std::to_string(offset + i));
    }
  }
  return labels;
}

std::vector<std::uint8_t> serialize_idx_images(std::span<const float> pixels, std::uint32_t count) {
  if (pixels.size() != std::size_t{count} * nn::kFeatures) {
    throw ArgumentError("pixels", "length does not match count x 784");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + pixels.size());
  write_be32(out, kImageMagic);
  write_be32(out, count);
  write_be32(out, static_cast<std::uint32_t>(nn::kImageSide));
  write_be32(out, static_cast<std::uint32_t>(nn::kImageSide));
  for (float p : pixels) {
    out.push_back(static_cast<std::uint8_t>(std::lround(static_cast<double>(p) * 255.0)));
  }
  return out;
}

std::vector<std::uint8_t> serialize_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

}  // namespace apg::mnist
