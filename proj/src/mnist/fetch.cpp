#include "apg/mnist/fetch.hpp"

#include <curl/curl.h>
#include <openssl/evp.h>
#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <memory>

#include "apg/error.hpp"
#include "apg/mnist/dataset.hpp"

namespace apg::mnist {
namespace {

std::size_t append_body(char* data, std::size_t size, std::size_t count, void* user) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(user);
  out->insert(out->end(), data, data + size * count);
  return size * count;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &length) != 1) {
    throw Error("sha256 computation failed");
  }
  std::string hex;
  hex.reserve(length * 2);
  char buf[3];
  for (unsigned int i = 0; i < length; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  // 16 + MAX_WBITS selects the gzip wrapper.
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw FormatError("gzip: inflateInit failed");
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> chunk(1 << 16);
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw FormatError("gzip: corrupt stream at input byte " + std::to_string(zs.total_in));
    }
    out.insert(out.end(), chunk.begin(), chunk.end() - zs.avail_out);
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw FormatError("gzip: truncated stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::vector<std::uint8_t> download(const std::string& url) {
  static const bool initialised = [] { return curl_global_init(CURL_GLOBAL_DEFAULT) == CURLE_OK; }();
  if (!initialised) throw IoError("libcurl initialisation failed");

  std::unique_ptr<CURL, decltype(&curl_easy_cleanup)> curl(curl_easy_init(), curl_easy_cleanup);
  if (!curl) throw IoError("libcurl handle allocation failed");
  std::vector<std::uint8_t> body;
  curl_easy_setopt(curl.get(), CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl.get(), CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEFUNCTION, append_body);
  curl_easy_setopt(curl.get(), CURLOPT_WRITEDATA, &body);
  curl_easy_setopt(curl.get(), CURLOPT_CONNECTTIMEOUT, 30L);
  const CURLcode rc = curl_easy_perform(curl.get());
  if (rc != CURLE_OK) throw IoError(url + ": " + curl_easy_strerror(rc));
  long status = 0;
  curl_easy_getinfo(curl.get(), CURLINFO_RESPONSE_CODE, &status);
  // file:// reports 0.
  if (status != 0 && (status < 200 || status >= 300)) {
    throw IoError(url + ": HTTP status " + std::to_string(status));
  }
  return body;
}

void fetch_mnist(const std::string& base_url, const std::filesystem::path& out_dir,
                 const FetchLog& log) {
  std::filesystem::create_directories(out_dir);
  for (const auto& pinned : kPinnedFiles) {
    const auto target = out_dir / std::string(pinned.name);
    std::error_code ec;
    if (std::filesystem::is_regular_file(target, ec) && sha256_hex(read_file(target)) == pinned.sha256) {
      if (log) log(std::string(pinned.name) + ": present, digest ok");
      continue;
    }
    const std::string url = base_url + std::string(pinned.name) + ".gz";
    if (log) log("downloading " + url);
    const auto payload = gunzip(download(url));
    const std::string digest = sha256_hex(payload);
    if (digest != pinned.sha256) {
      throw DataError(std::string(pinned.name) + ": sha256 " + digest + " does not match pinned " +
                      std::string(pinned.sha256));
    }
    write_bytes(target, payload);
    if (log) log(std::string(pinned.name) + ": ok");
  }
}

}  // namespace apg::mnist
