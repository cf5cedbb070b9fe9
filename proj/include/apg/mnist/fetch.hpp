#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace apg::mnist {

struct PinnedFile {
  std::string_view name;    // uncompressed file name
  std::string_view sha256;  // digest of the uncompressed payload, lowercase hex
};

/// Digests of the four canonical MNIST files after decompression.
inline constexpr std::array<PinnedFile, 4> kPinnedFiles{{
    {"train-images-idx3-ubyte", "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db"},
    {"train-labels-idx1-ubyte", "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5"},
    {"t10k-images-idx3-ubyte", "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7"},
    {"t10k-labels-idx1-ubyte", "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2"},
}};

inline constexpr std::string_view kDefaultMirror = "https://ossci-datasets.s3.amazonaws.com/mnist/";

std::string sha256_hex(std::span<const std::uint8_t> bytes);

/// Inflates an in-memory gzip stream. FormatError on corrupt input.
std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes);

/// Downloads a URL (any scheme libcurl supports, including file://).
/// IoError on transport failure or a non-2xx HTTP status.
std::vector<std::uint8_t> download(const std::string& url);

using FetchLog = std::function<void(const std::string&)>;

/// Fetches "<base_url><name>.gz" for each pinned file, verifies the
/// decompressed digest and writes "<out_dir>/<name>". Files already present
/// with the right digest are left alone. DataError on a digest mismatch.
void fetch_mnist(const std::string& base_url, const std::filesystem::path& out_dir,
                 const FetchLog& log = {});

}  // namespace apg::mnist
