#pragma once

#include <memory>
#include <string>
#include <thread>

#include "tablebench/server/auth.hpp"
#include "tablebench/server/platform.hpp"

namespace httplib {
class Server;
}

namespace tb::server {

inline constexpr std::string_view kRolloutHeader = "X-Rollout-Id";

// REST front of a Platform. Routes are listed in tablebench/protocol/routes.hpp.
// Errors come back as {"error": code, "message": text} with the status from
// http_status().
class HttpServer {
 public:
  HttpServer(Platform& platform, const KeyRegistry& keys);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host, int port);
  // Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();
  int port() const { return port_; }

 private:
  void install_routes();

  Platform& platform_;
  const KeyRegistry& keys_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace tb::server
