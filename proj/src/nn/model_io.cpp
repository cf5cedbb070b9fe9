#include "apg/nn/model_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>

#include "apg/error.hpp"

namespace apg::nn {
namespace {

static_assert(std::endian::native == std::endian::little,
              "model I/O assumes a little-endian host");

constexpr std::array<std::uint8_t, 4> kMagic{'A', 'P', 'G', 'M'};
constexpr std::uint32_t kMaxRank = 8;

class Writer {
 public:
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    std::array<std::uint8_t, 4> b{};
    std::memcpy(b.data(), &v, 4);
    bytes(b);
  }
  void floats(std::span<const float> v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(v.data());
    out_.insert(out_.end(), p, p + v.size_bytes());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n, const std::string& field) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(field + ": truncated at byte " + std::to_string(pos_));
    }
  }
  std::uint8_t u8(const std::string& field) {
    need(1, field);
    return in_[pos_++];
  }
  std::uint32_t u32(const std::string& field) {
    need(4, field);
    std::uint32_t v = 0;
    std::memcpy(&v, in_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::vector<float> floats(std::size_t count, const std::string& field) {
    if (count > (in_.size() - pos_) / sizeof(float)) {
      throw FormatError(field + ": truncated at byte " + std::to_string(pos_) + " (needs " +
                        std::to_string(count) + " floats)");
    }
    std::vector<float> v(count);
    std::memcpy(v.data(), in_.data() + pos_, count * sizeof(float));
    pos_ += count * sizeof(float);
    return v;
  }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::vector<std::uint32_t> dims_of(const Layer& layer) {
  return std::visit(
      [](const auto& l) -> std::vector<std::uint32_t> {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Conv2D>) {
          return {l.input.channels, l.input.height, l.input.width, l.out_channels, l.kernel};
        } else if constexpr (std::is_same_v<T, MaxPool2D>) {
          return {l.input.channels, l.input.height, l.input.width, l.window};
        } else if constexpr (std::is_same_v<T, Dense>) {
          return {l.inputs, l.outputs};
        } else if constexpr (std::is_same_v<T, Relu>) {
          return {l.input.channels, l.input.height, l.input.width};
        } else {
          return {l.size};
        }
      },
      layer);
}

std::size_t checked_product(std::initializer_list<std::uint32_t> dims, const std::string& field) {
  std::size_t total = 1;
  for (auto d : dims) {
    if (d != 0 && total > (std::size_t{1} << 40) / d) throw FormatError(field + ": dims too large");
    total *= d;
  }
  return total;
}

Layer read_layer(Reader& r, std::size_t index) {
  const std::string at = "layer[" + std::to_string(index) + "]";
  const std::uint8_t tag = r.u8(at + ".kind");
  const std::uint32_t rank = r.u32(at + ".rank");
  if (rank > kMaxRank) throw FormatError(at + ".rank: " + std::to_string(rank) + " too large");
  std::vector<std::uint32_t> dims(rank);
  for (auto& d : dims) d = r.u32(at + ".dims");

  const auto expect_rank = [&](std::uint32_t want) {
    if (rank != want) {
      throw FormatError(at + ".rank: expected " + std::to_string(want) + ", got " +
                        std::to_string(rank));
    }
  };

  switch (static_cast<LayerKind>(tag)) {
    case LayerKind::conv: {
      expect_rank(5);
      Conv2D c;
      c.input = {dims[0], dims[1], dims[2]};
      c.out_channels = dims[3];
      c.kernel = dims[4];
      c.weights = r.floats(checked_product({dims[3], dims[0], dims[4], dims[4]}, at + ".dims"),
                           at + ".weights");
      c.bias = r.floats(dims[3], at + ".bias");
      return c;
    }
    case LayerKind::max_pool:
      expect_rank(4);
      return MaxPool2D{{dims[0], dims[1], dims[2]}, dims[3]};
    case LayerKind::dense: {
      expect_rank(2);
      Dense d;
      d.inputs = dims[0];
      d.outputs = dims[1];
      d.weights = r.floats(checked_product({dims[0], dims[1]}, at + ".dims"), at + ".weights");
      d.bias = r.floats(dims[1], at + ".bias");
      return d;
    }
    case LayerKind::relu:
      expect_rank(3);
      return Relu{{dims[0], dims[1], dims[2]}};
    case LayerKind::softmax:
      expect_rank(1);
      return Softmax{dims[0]};
  }
  throw FormatError(at + ".kind: unknown tag " + std::to_string(tag));
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Network& net) {
  Writer w;
  w.bytes(kMagic);
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& layer : net.layers()) {
    w.u8(static_cast<std::uint8_t>(kind_of(layer)));
    const auto dims = dims_of(layer);
    w.u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) w.u32(d);
    std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2D> || std::is_same_v<T, Dense>) {
            w.floats(l.weights);
            w.floats(l.bias);
          }
        },
        layer);
  }
  return w.take();
}

Network deserialize_model(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(kMagic.size(), "magic");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw FormatError("magic: expected \"APGM\"");
  }
  for (std::size_t i = 0; i < kMagic.size(); ++i) r.u8("magic");

  const std::uint32_t version = r.u32("version");
  if (version != kModelFormatVersion) {
    throw FormatError("version: unsupported " + std::to_string(version) + " (expected " +
                      std::to_string(kModelFormatVersion) + ")");
  }
  const std::uint32_t count = r.u32("layer_count");
  if (count == 0 || count > 4096) {
    throw FormatError("layer_count: implausible value " + std::to_string(count));
  }
  std::vector<Layer> layers;
  layers.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) layers.push_back(read_layer(r, i));
  if (!r.done()) {
    throw FormatError("trailing bytes: " + std::to_string(bytes.size() - r.position()) +
                      " unread after layer " + std::to_string(count - 1));
  }
  try {
    return Network(std::move(layers));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("layers: ") + e.what());
  }
}

void save_model(const Network& net, const std::filesystem::path& path) {
  const auto bytes = serialize_model(net);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Network load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace apg::nn
