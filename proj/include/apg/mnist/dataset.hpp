#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "apg/nn/dataset.hpp"
#include "apg/nn/network.hpp"

namespace apg::mnist {

/// Reads a whole file, inflating it when the name ends in ".gz".
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Canonical file stem for a split ("train-images-idx3-ubyte" etc.).
std::filesystem::path images_file(nn::Split split);
std::filesystem::path labels_file(nn::Split split);

/// Path of `stem` inside `dir`, preferring the uncompressed file over "<stem>.gz".
/// Returns nullopt when neither exists.
std::optional<std::filesystem::path> locate(const std::filesystem::path& dir,
                                            const std::filesystem::path& stem);

/// True when both files for both splits are present in `dir`.
bool has_mnist(const std::filesystem::path& dir);

/// Loads one split. DataError when files are missing or counts disagree.
nn::Dataset load_split(const std::filesystem::path& dir, nn::Split split);

struct Seed {
  std::size_t seed_id = 0;  // index into the test split
  std::uint8_t label = 0;
  nn::Image image;
};

using SeedSet = std::vector<Seed>;

/// Picks `per_class` test images of every class, in a permutation fixed by
/// `rng_seed`. With a model, only images it classifies correctly qualify.
/// Entries are ordered by class, then by pick order. DataError when a class
/// cannot supply enough images.
SeedSet select_seeds(const nn::Dataset& test, std::size_t per_class, std::uint64_t rng_seed,
                     const nn::Network* model = nullptr);

}  // namespace apg::mnist
