#include "chatd/service/server.hpp"

#include <sys/socket.h>

#include <charconv>
#include <list>
#include <mutex>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "chatd/eval/evalkit.hpp"

namespace chatd::service {

using nlohmann::json;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

std::vector<std::string_view> split_path(std::string_view target) {
  if (const auto q = target.find('?'); q != std::string_view::npos) target = target.substr(0, q);
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (pos < target.size()) {
    const auto next = target.find('/', pos);
    const auto end = next == std::string_view::npos ? target.size() : next;
    if (end > pos) parts.push_back(target.substr(pos, end - pos));
    pos = end + 1;
  }
  return parts;
}

json parse_body(std::string_view body) {
  if (body.empty()) return json::object();
  try {
    auto doc = json::parse(body);
    if (!doc.is_object()) throw Error(ErrorCode::kParseError, "request body must be a JSON object");
    return doc;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

std::string required_string(const json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || !it->is_string()) throw Error(ErrorCode::kInvalidParams, std::string("missing string field ") + key);
  return it->get<std::string>();
}

std::optional<double> opt_number(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

json healthz(const SessionManager& manager) {
  json kgs = json::object();
  for (const auto& name : manager.kg_names()) {
    const auto stats = manager.kg(name)->graph.stats();
    kgs[name] = {{"loaded", true}, {"nodes", stats.nodes}, {"edges", stats.edges}};
  }
  return {{"status", "ok"},
          {"kg", kgs},
          {"provider", {{"name", manager.provider().name()}, {"configured", true}}},
          {"literature", manager.literature() != nullptr}};
}

json turn_body(const agents::TurnResult& result) {
  return {{"answer", result.answer.text},
          {"citations", result.answer.citations},
          {"refused", result.answer.refused},
          {"events", result.events}};
}

}  // namespace

unsigned http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownKg:
    case ErrorCode::kUnknownSession:
    case ErrorCode::kUnknownAnalysis:
      return 404;
    case ErrorCode::kSessionBusy:
      return 409;
    case ErrorCode::kParseError:
    case ErrorCode::kInvalidParams:
    case ErrorCode::kSchemaViolation:
    case ErrorCode::kTranscriptMissing:
      return 400;
    case ErrorCode::kProviderUnreachable:
    case ErrorCode::kMalformedResponse:
    case ErrorCode::kScriptExhausted:
    case ErrorCode::kScriptMismatch:
    case ErrorCode::kStreamInterrupted:
    case ErrorCode::kBackendUnreachable:
      return 502;
    default:
      return 500;
  }
}

json error_body(std::string_view code, std::string_view message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

json run_eval_request(SessionManager* manager, const json& request) {
  std::optional<eval::Averages> reported;
  if (auto it = request.find("reported"); it != request.end() && it->is_object()) {
    reported = eval::Averages{opt_number(*it, "tool_accuracy"), opt_number(*it, "call_accuracy"),
                              opt_number(*it, "answer_accuracy")};
  }
  eval::MetricsTable table;
  json out = json::object();
  if (auto rows = request.find("rows"); rows != request.end()) {
    table = eval::MetricsTable::from_json(*rows);
  } else if (auto cases_doc = request.find("cases"); cases_doc != request.end() && cases_doc->is_array()) {
    std::vector<eval::EvalCase> cases;
    for (const auto& c : *cases_doc) cases.push_back(eval::case_from_json(c));
    std::map<std::string, json> transcripts;
    if (auto t = request.find("transcripts"); t != request.end() && t->is_object()) {
      for (const auto& [id, events] : t->items()) transcripts[id] = events;
    } else {
      if (!manager) throw Error(ErrorCode::kInvalidParams, "live eval runs need a session manager");
      const auto kg = request.value("kg", std::string{});
      for (const auto& c : cases) {
        json events = json::array();
        try {
          manager->run_detached(c.question, kg, [&](const json& e) { events.push_back(e); });
        } catch (const Error& e) {
          spdlog::warn("eval case {} failed: {}", c.id, e.what());
        }
        transcripts[c.id] = std::move(events);
      }
      out["transcripts"] = transcripts;
    }
    table = eval::score_run(cases, transcripts);
    out["review_sheet"] = eval::review_sheet(cases, transcripts);
  } else {
    throw Error(ErrorCode::kInvalidParams, "eval request needs \"rows\" or \"cases\"");
  }
  out["table"] = table.to_json();
  out["text"] = eval::render_table(table, reported);
  return out;
}

HttpReply route_http(SessionManager& manager, std::string_view method, std::string_view target, std::string_view body) {
  const auto p = split_path(target);
  try {
    if (method == "GET" && p.size() == 1 && p[0] == "healthz") return {200, healthz(manager)};
    if (p.size() >= 2 && p[0] == "api" && p[1] == "sessions") {
      if (p.size() == 2 && method == "POST") {
        const auto req = parse_body(body);
        auto info = manager.create_session(req.value("kg", std::string{}));
        auto doc = info.to_json();
        doc["steps_remaining"] = manager.snapshot(info.id).steps_remaining;
        return {201, doc};
      }
      if (p.size() == 3 && method == "GET") {
        const std::string id(p[2]);
        auto doc = manager.info(id).to_json();
        const auto state = manager.snapshot(id);
        doc["steps_remaining"] = state.steps_remaining;
        json analyses = json::array();
        for (const auto& a : state.artifacts) {
          analyses.push_back({{"id", a.id}, {"kind", a.kind}, {"network", a.network.has_value()}});
        }
        doc["analyses"] = analyses;
        return {200, doc};
      }
      if (p.size() == 4 && p[3] == "messages" && method == "POST") {
        const auto req = parse_body(body);
        return {200, turn_body(manager.post_message(std::string(p[2]), required_string(req, "text")))};
      }
      if (p.size() == 5 && p[3] == "network" && method == "GET") {
        return {200, manager.get_network(std::string(p[2]), std::string(p[4]))};
      }
      if (p.size() == 6 && p[3] == "network" && p[5] == "style" && method == "POST") {
        const auto req = parse_body(body);
        return {200, manager.restyle_network(std::string(p[2]), std::string(p[4]), req.value("instruction", std::string{}))};
      }
    }
    if (method == "POST" && p.size() == 3 && p[0] == "api" && p[1] == "eval" && p[2] == "run") {
      return {200, run_eval_request(&manager, parse_body(body))};
    }
    return {404, error_body("NotFound", std::string(method) + " " + std::string(target))};
  } catch (const Error& e) {
    return {http_status(e.code()), error_body(to_string(e.code()), e.what())};
  } catch (const json::exception& e) {
    return {400, error_body(to_string(ErrorCode::kParseError), e.what())};
  } catch (const std::exception& e) {
    spdlog::error("unhandled error on {} {}: {}", method, target, e.what());
    return {500, error_body("Internal", e.what())};
  }
}

ServerOptions parse_listen(std::string_view listen) {
  ServerOptions o;
  auto port_part = listen;
  if (const auto colon = listen.rfind(':'); colon != std::string_view::npos) {
    if (colon > 0) o.host = std::string(listen.substr(0, colon));
    port_part = listen.substr(colon + 1);
  }
  unsigned value = 0;
  const auto [ptr, ec] = std::from_chars(port_part.data(), port_part.data() + port_part.size(), value);
  if (ec != std::errc{} || ptr != port_part.data() + port_part.size() || value > 65535) {
    throw Error(ErrorCode::kInvalidParams, "bad listen address: " + std::string(listen));
  }
  o.port = static_cast<std::uint16_t>(value);
  return o;
}

struct Server::Impl {
  struct Connection {
    int fd = -1;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  explicit Impl(SessionManager& m) : manager(m), acceptor(io) {}

  SessionManager& manager;
  asio::io_context io;
  tcp::acceptor acceptor;
  std::thread accept_thread;
  std::atomic<bool> stopping{false};
  std::mutex mutex;
  std::list<std::shared_ptr<Connection>> connections;

  void reap() {
    std::lock_guard lock(mutex);
    for (auto it = connections.begin(); it != connections.end();) {
      if ((*it)->done) {
        if ((*it)->thread.joinable()) (*it)->thread.join();
        it = connections.erase(it);
      } else {
        ++it;
      }
    }
  }

  void accept_loop() {
    while (!stopping) {
      tcp::socket socket(io);
      beast::error_code ec;
      acceptor.accept(socket, ec);
      if (ec) {
        if (stopping) break;
        spdlog::warn("accept failed: {}", ec.message());
        continue;
      }
      reap();
      auto conn = std::make_shared<Connection>();
      conn->fd = socket.native_handle();
      std::lock_guard lock(mutex);
      if (stopping) break;
      conn->thread = std::thread([this, conn, s = std::move(socket)]() mutable {
        serve(std::move(s));
        conn->done = true;
      });
      connections.push_back(conn);
    }
  }

  template <class Body>
  void write_json(tcp::socket& socket, const http::request<Body>& req, unsigned status, const json& body) {
    http::response<http::string_body> res{static_cast<http::status>(status), req.version()};
    res.set(http::field::server, "chatd");
    res.set(http::field::content_type, "application/json; charset=utf-8");
    res.keep_alive(req.keep_alive());
    res.body() = body.dump();
    res.prepare_payload();
    http::write(socket, res);
  }

  void serve(tcp::socket socket) {
    beast::error_code ec;
    beast::flat_buffer buffer;
    try {
      for (;;) {
        http::request<http::string_body> req;
        http::read(socket, buffer, req, ec);
        if (ec) break;
        if (websocket::is_upgrade(req)) {
          serve_websocket(std::move(socket), std::move(req));
          return;
        }
        const auto reply = route_http(manager, std::string(req.method_string()), std::string(req.target()), req.body());
        write_json(socket, req, reply.status, reply.body);
        if (!req.keep_alive()) break;
      }
    } catch (const std::exception& e) {
      if (!stopping) spdlog::debug("connection closed: {}", e.what());
    }
    socket.shutdown(tcp::socket::shutdown_send, ec);
  }

  void serve_websocket(tcp::socket socket, http::request<http::string_body> req) {
    const std::string target(req.target());
    const auto p = split_path(target);
    if (p.size() != 3 || p[0] != "ws" || p[1] != "sessions") {
      write_json(socket, req, 404, error_body("NotFound", target));
      return;
    }
    const std::string id(p[2]);
    try {
      manager.info(id);
    } catch (const Error& e) {
      write_json(socket, req, http_status(e.code()), error_body(to_string(e.code()), e.what()));
      return;
    }

    websocket::stream<tcp::socket> ws(std::move(socket));
    ws.accept(req);
    ws.text(true);
    const auto send = [&](const json& event) { ws.write(asio::buffer(event.dump())); };
    beast::flat_buffer buffer;
    for (;;) {
      beast::error_code ec;
      buffer.clear();
      ws.read(buffer, ec);
      if (ec) return;
      json frame;
      try {
        frame = json::parse(beast::buffers_to_string(buffer.data()));
      } catch (const json::parse_error& e) {
        send(agents::events::error(0, std::string(to_string(ErrorCode::kParseError)), e.what()));
        continue;
      }
      if (!frame.is_object() || frame.value("type", "") != "user_message" || !frame.contains("text") ||
          !frame["text"].is_string()) {
        send(agents::events::error(0, std::string(to_string(ErrorCode::kInvalidParams)),
                                   "expected {\"type\":\"user_message\",\"text\":...}"));
        continue;
      }
      bool streamed = false;
      try {
        manager.post_message(id, frame["text"].get<std::string>(), [&](const json& event) {
          streamed = true;
          send(event);
        });
      } catch (const Error& e) {
        // Errors raised inside the turn were already streamed as its terminal event.
        if (!streamed) send(agents::events::error(0, std::string(to_string(e.code())), e.what()));
      } catch (const beast::system_error&) {
        return;
      } catch (const std::exception& e) {
        if (!streamed) send(agents::events::error(0, "Internal", e.what()));
      }
    }
  }
};

Server::Server(SessionManager& manager, ServerOptions options)
    : impl_(std::make_unique<Impl>(manager)), manager_(manager), options_(std::move(options)) {}

Server::~Server() { stop(); }

void Server::start() {
  const tcp::endpoint endpoint(asio::ip::make_address(options_.host), options_.port);
  impl_->acceptor.open(endpoint.protocol());
  impl_->acceptor.set_option(asio::socket_base::reuse_address(true));
  impl_->acceptor.bind(endpoint);
  impl_->acceptor.listen(asio::socket_base::max_listen_connections);
  bound_port_ = impl_->acceptor.local_endpoint().port();
  impl_->accept_thread = std::thread([this] { impl_->accept_loop(); });
  spdlog::info("listening on {}:{}", options_.host, bound_port_);
}

void Server::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  // shutdown(2) wakes the blocking accept and reads from other threads.
  if (impl_->acceptor.is_open()) ::shutdown(impl_->acceptor.native_handle(), SHUT_RDWR);
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
  std::list<std::shared_ptr<Impl::Connection>> conns;
  {
    std::lock_guard lock(impl_->mutex);
    conns.swap(impl_->connections);
  }
  for (auto& c : conns) {
    if (!c->done) ::shutdown(c->fd, SHUT_RDWR);
  }
  for (auto& c : conns) {
    if (c->thread.joinable()) c->thread.join();
  }
  beast::error_code ec;
  impl_->acceptor.close(ec);
}

}  // namespace chatd::service
