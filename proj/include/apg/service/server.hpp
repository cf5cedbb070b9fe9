#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "apg/service/playground.hpp"

namespace httplib {
class Server;
}

namespace apg::service {

inline constexpr int kDefaultPort = 9000;

struct ServerOptions {
  std::string host = "localhost";
  int port = kDefaultPort;  // 0 picks a free port
  std::optional<std::filesystem::path> static_dir;
  std::size_t workers = 0;  // 0 = one per hardware thread
  std::string cors_origin = "*";
};

/// HTTP/1.1 binding for a Playground:
///   GET /healthz, GET /api/config, GET /api/seeds, POST /api/attack,
///   plus static files from static_dir mounted at "/".
class Server {
 public:
  Server(std::shared_ptr<const Playground> playground, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// False when the address cannot be bound (port busy).
  bool bind();
  /// Bound port; valid after bind().
  int port() const noexcept { return port_; }
  /// Blocks until stop() is called.
  void listen();
  void stop();
  bool running() const;

 private:
  std::shared_ptr<const Playground> playground_;
  ServerOptions options_;
  std::unique_ptr<httplib::Server> http_;
  int port_ = -1;
};

}  // namespace apg::service
