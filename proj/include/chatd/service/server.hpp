#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "chatd/service/sessions.hpp"

namespace chatd::service {

struct HttpReply {
  unsigned status = 200;
  nlohmann::json body;
};

/// HTTP status for an error code (404 unknown ids, 409 busy, 400 bad input,
/// 502 provider or backend failure, 500 otherwise).
unsigned http_status(ErrorCode code);

/// {"error": {"code", "message"}}
nlohmann::json error_body(std::string_view code, std::string_view message);

/// Socket-free router for every plain HTTP route:
///   GET  /healthz
///   POST /api/sessions                                 {"kg"?}
///   GET  /api/sessions/{id}
///   POST /api/sessions/{id}/messages                   {"text"}
///   GET  /api/sessions/{id}/network/{analysis}
///   POST /api/sessions/{id}/network/{analysis}/style   {"instruction"}
///   POST /api/eval/run
HttpReply route_http(SessionManager& manager, std::string_view method, std::string_view target, std::string_view body);

/// Body of POST /api/eval/run. Three shapes are accepted:
///   {"rows": [...], "reported"?: {...}}            render a fixed metrics table
///   {"cases": [...], "transcripts": {id: events}}  score recorded transcripts
///   {"cases": [...]}                               run every case live, then score
/// Live runs need a manager; the other shapes accept nullptr.
nlohmann::json run_eval_request(SessionManager* manager, const nlohmann::json& request);

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
};

/// Splits "host:port" (port alone means 127.0.0.1). Throws InvalidParams.
ServerOptions parse_listen(std::string_view listen);

/// REST and WebSocket front end. One thread per connection; turns of one
/// session are serialized by the manager.
class Server {
 public:
  Server(SessionManager& manager, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting in the background.
  void start();
  /// Closes the listener and every open connection, then joins all threads.
  void stop();
  /// Bound port, valid after start().
  std::uint16_t port() const { return bound_port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  SessionManager& manager_;
  ServerOptions options_;
  std::uint16_t bound_port_ = 0;
};

}  // namespace chatd::service
