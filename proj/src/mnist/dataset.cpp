#include "apg/mnist/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include "apg/error.hpp"
#include "apg/mnist/idx.hpp"
#include "apg/nn/train.hpp"

namespace apg::mnist {
namespace {

std::vector<std::uint8_t> inflate_gzip(const std::filesystem::path& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (file == nullptr) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  for (;;) {
    const int n = gzread(file, chunk.data(), static_cast<unsigned>(chunk.size()));
    if (n < 0) {
      int code = 0;
      const std::string msg = gzerror(file, &code);
      gzclose(file);
      throw FormatError("gzip: " + path.string() + ": " + msg);
    }
    if (n == 0) break;
    out.insert(out.end(), chunk.begin(), chunk.begin() + n);
  }
  gzclose(file);
  return out;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  if (path.extension() == ".gz") return inflate_gzip(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path images_file(nn::Split split) {
  return split == nn::Split::train ? "train-images-idx3-ubyte" : "t10k-images-idx3-ubyte";
}

std::filesystem::path labels_file(nn::Split split) {
  return split == nn::Split::train ? "train-labels-idx1-ubyte" : "t10k-labels-idx1-ubyte";
}

std::optional<std::filesystem::path> locate(const std::filesystem::path& dir,
                                            const std::filesystem::path& stem) {
  std::error_code ec;
  const auto plain = dir / stem;
  if (std::filesystem::is_regular_file(plain, ec)) return plain;
  auto gz = plain;
  gz += ".gz";
  if (std::filesystem::is_regular_file(gz, ec)) return gz;
  return std::nullopt;
}

bool has_mnist(const std::filesystem::path& dir) {
  for (auto split : {nn::Split::train, nn::Split::test}) {
    if (!locate(dir, images_file(split)) || !locate(dir, labels_file(split))) return false;
  }
  return true;
}

nn::Dataset load_split(const std::filesystem::path& dir, nn::Split split) {
  const auto images = locate(dir, images_file(split));
  const auto labels = locate(dir, labels_file(split));
  if (!images || !labels) {
    throw DataError("missing MNIST " + std::string(nn::to_string(split)) + " files in " +
                    dir.string());
  }
  nn::Dataset data;
  data.split = split;
  data.features = nn::kFeatures;
  data.pixels = parse_idx_images(read_file(*images));
  data.labels = parse_idx_labels(read_file(*labels));
  if (data.pixels.size() != data.labels.size() * nn::kFeatures) {
    throw DataError("image and label counts differ for the " + std::string(nn::to_string(split)) +
                    " split");
  }
  return data;
}

SeedSet select_seeds(const nn::Dataset& test, std::size_t per_class, std::uint64_t rng_seed,
                     const nn::Network* model) {
  if (per_class == 0) throw ArgumentError("per_class", "must be at least 1");
  std::vector<std::size_t> order(test.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(rng_seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::uint8_t> predicted;
  if (model != nullptr) predicted = nn::predict_all(*model, test);

  std::vector<std::vector<std::size_t>> picks(nn::kClasses);
  for (std::size_t idx : order) {
    const std::uint8_t label = test.labels[idx];
    if (label >= nn::kClasses || picks[label].size() >= per_class) continue;
    if (model != nullptr && predicted[idx] != label) continue;
    picks[label].push_back(idx);
  }

  SeedSet seeds;
  for (std::size_t cls = 0; cls < nn::kClasses; ++cls) {
    if (picks[cls].size() < per_class) {
      throw DataError("class " + std::to_string(cls) + " has only " +
                      std::to_string(picks[cls].size()) + " eligible test images, need " +
                      std::to_string(per_class));
    }
    for (std::size_t idx : picks[cls]) {
      const auto img = test.image(idx);
      seeds.push_back({idx, static_cast<std::uint8_t>(cls), nn::Image(img.begin(), img.end())});
    }
  }
  return seeds;
}

}  // namespace apg::mnist
