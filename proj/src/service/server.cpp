#include "apg/service/server.hpp"

#include <httplib.h>

#include <algorithm>
#include <thread>

namespace apg::service {
namespace {

void send(httplib::Response& res, const Reply& reply) {
  res.status = reply.status;
  res.set_content(reply.body.dump(), "application/json");
}

}  // namespace

Server::Server(std::shared_ptr<const Playground> playground, ServerOptions options)
    : playground_(std::move(playground)),
      options_(std::move(options)),
      http_(std::make_unique<httplib::Server>()) {
  const std::size_t workers =
      options_.workers != 0 ? options_.workers
                            : std::max<std::size_t>(1, std::thread::hardware_concurrency());
  http_->new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
  // SO_REUSEADDR without SO_REUSEPORT: a busy port fails to bind.
  http_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
  });

  const std::string origin = options_.cors_origin;
  http_->set_post_routing_handler([origin](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
  http_->Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });

  http_->Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("ok", "text/plain");
  });
  http_->Get("/api/config", [this](const httplib::Request&, httplib::Response& res) {
    send(res, playground_->config());
  });
  http_->Get("/api/seeds", [this](const httplib::Request&, httplib::Response& res) {
    send(res, playground_->seeds());
  });
  http_->Post("/api/attack", [this](const httplib::Request& req, httplib::Response& res) {
    send(res, playground_->attack(req.body));
  });

  if (options_.static_dir) {
    http_->set_mount_point("/", options_.static_dir->string());
  }
}

Server::~Server() { stop(); }

bool Server::bind() {
  if (options_.port == 0) {
    port_ = http_->bind_to_any_port(options_.host);
    return port_ > 0;
  }
  if (!http_->bind_to_port(options_.host, options_.port)) return false;
  port_ = options_.port;
  return true;
}

void Server::listen() { http_->listen_after_bind(); }

void Server::stop() {
  if (http_) http_->stop();
}

bool Server::running() const { return http_ && http_->is_running(); }

}  // namespace apg::service
