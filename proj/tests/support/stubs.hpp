#pragma once
// Local HTTP stand-ins for the model server and the literature API.

#include <chrono>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace stub {

/// httplib server on an ephemeral loopback port, running until destroyed.
class Server {
 public:
  Server() = default;
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;
  ~Server() { stop(); }

  httplib::Server& http() { return server_; }

  void start() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

/// Chat-completions body carrying one assistant message.
inline nlohmann::json completion_body(const std::string& content) {
  return {{"id", "cmpl-1"},
          {"object", "chat.completion"},
          {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}, {"finish_reason", "stop"}}}}};
}

/// One server-sent event carrying a content delta.
inline std::string sse_delta(const std::string& piece) {
  const nlohmann::json doc = {{"choices", {{{"index", 0}, {"delta", {{"content", piece}}}}}}};
  return "data: " + doc.dump() + "\n\n";
}

inline std::string sse_done() {
  const nlohmann::json doc = {{"choices", {{{"index", 0}, {"delta", nlohmann::json::object()}, {"finish_reason", "stop"}}}}};
  return "data: " + doc.dump() + "\n\ndata: [DONE]\n\n";
}

/// Streams `pieces` as SSE deltas. With `cut` set, the connection is torn
/// down after the pieces instead of finishing the stream.
inline void serve_stream(httplib::Response& res, std::vector<std::string> pieces, bool cut) {
  auto shared = std::make_shared<std::vector<std::string>>(std::move(pieces));
  res.set_chunked_content_provider("text/event-stream", [shared, cut](std::size_t, httplib::DataSink& sink) {
    for (const auto& p : *shared) {
      const auto ev = sse_delta(p);
      sink.write(ev.data(), ev.size());
    }
    if (cut) return false;  // abort: no terminating chunk
    const auto done = sse_done();
    sink.write(done.data(), done.size());
    sink.done();
    return true;
  });
}

/// Semantic-Scholar style search response with `n` papers named prefix-i.
inline nlohmann::json search_body(const std::string& prefix, int n) {
  nlohmann::json data = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    data.push_back({{"paperId", prefix + "-" + std::to_string(i)},
                    {"title", "Paper " + prefix + " " + std::to_string(i)},
                    {"year", 2020 + i % 4},
                    {"venue", "Journal"},
                    {"authors", {{{"name", "A. Author"}}}},
                    {"abstract", "Abstract of " + prefix}});
  }
  return {{"total", n}, {"data", data}};
}

}  // namespace stub
