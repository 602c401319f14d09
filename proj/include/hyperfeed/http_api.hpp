#pragma once

#include <memory>
#include <string>

#include "hyperfeed/service.hpp"

namespace httplib {
class Server;
}

namespace hyperfeed {

/// Header carrying an RFC 3339 instant that replaces the clock for one recommendation call.
/// Honoured only when the engine runs in test mode.
inline constexpr const char* kNowHeader = "X-Hyperfeed-Now";

/// HTTP/1.1 front end for an Engine:
///   POST /v1/news, POST /v1/events, GET /v1/recommendations,
///   POST /v1/users/{id}/follows, GET /v1/users/{id}/profile, GET /v1/health,
///   POST /v1/admin/batch.
class HttpApi {
 public:
  explicit HttpApi(Engine& engine);
  ~HttpApi();

  HttpApi(const HttpApi&) = delete;
  HttpApi& operator=(const HttpApi&) = delete;

  /// Binds to host:port (port 0 picks a free one) and returns the bound port, or -1.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  bool serve();
  void stop();
  httplib::Server& server() { return *server_; }

 private:
  void install_routes();

  Engine& engine_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace hyperfeed
