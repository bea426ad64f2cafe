#include "chatd/llm/http_provider.hpp"

#include <cstdlib>
#include <map>
#include <regex>

#include <httplib.h>

namespace chatd::llm {

using nlohmann::json;

HttpProviderConfig HttpProviderConfig::from_env() {
  HttpProviderConfig cfg;
  if (const char* v = std::getenv("CHATD_MODEL_URL"); v && *v) cfg.base_url = v;
  if (const char* v = std::getenv("CHATD_MODEL_NAME"); v && *v) cfg.model = v;
  if (const char* v = std::getenv("CHATD_API_KEY"); v && *v) cfg.api_key = v;
  return cfg;
}

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.base_url, m, kUrl)) {
    throw Error(ErrorCode::kInvalidParams, "model URL must be http(s)://host[:port][/prefix]: " + config_.base_url);
  }
  origin_ = m[1].str();
  prefix_ = m[2].str();
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

json HttpProvider::request_body(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools,
                                const CompletionParams& params, bool stream) const {
  json msgs = json::array();
  for (const auto& m : messages) {
    json item = {{"role", to_string(m.role)}, {"content", m.content}};
    if (m.tool_call) {
      item["tool_calls"] = json::array({{{"id", m.tool_call->id},
                                         {"type", "function"},
                                         {"function", {{"name", m.tool_call->name},
                                                       {"arguments", m.tool_call->arguments.dump()}}}}});
    }
    if (m.tool_call_id) item["tool_call_id"] = *m.tool_call_id;
    msgs.push_back(std::move(item));
  }
  json body = {{"model", config_.model},
               {"messages", msgs},
               {"temperature", params.temperature},
               {"max_tokens", params.max_tokens},
               {"stream", stream}};
  if (!tools.empty()) {
    json list = json::array();
    for (const auto& t : tools) {
      list.push_back({{"type", "function"},
                      {"function", {{"name", t.name}, {"description", t.description}, {"parameters", t.parameters}}}});
    }
    body["tools"] = std::move(list);
  }
  return body;
}

namespace {

ToolCall parse_tool_call(const json& call) {
  ToolCall out;
  out.id = call.value("id", std::string{});
  const auto& fn = call.at("function");
  out.name = fn.at("name").get<std::string>();
  const auto& args = fn.at("arguments");
  if (args.is_string()) {
    const auto text = args.get<std::string>();
    try {
      out.arguments = text.empty() ? json::object() : json::parse(text);
    } catch (const json::parse_error&) {
      throw Error(ErrorCode::kMalformedResponse, "tool call arguments are not JSON: " + text);
    }
  } else {
    out.arguments = args;
  }
  return out;
}

httplib::Headers auth_headers(const HttpProviderConfig& cfg) {
  httplib::Headers headers;
  if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
  return headers;
}

}  // namespace

ChatMessage HttpProvider::parse_response(const std::string& body) {
  try {
    const auto doc = json::parse(body);
    const auto& msg = doc.at("choices").at(0).at("message");
    ChatMessage out = ChatMessage::assistant("");
    if (auto it = msg.find("content"); it != msg.end() && it->is_string()) out.content = it->get<std::string>();
    if (auto it = msg.find("tool_calls"); it != msg.end() && it->is_array() && !it->empty()) {
      out.tool_call = parse_tool_call(it->at(0));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedResponse, std::string("chat completion body: ") + e.what());
  }
}

ChatMessage HttpProvider::complete(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools,
                                   const CompletionParams& params) {
  check_request(messages, tools);
  httplib::Client client(origin_);
  client.set_connection_timeout(config_.connect_timeout);
  client.set_read_timeout(config_.read_timeout);
  const auto body = request_body(messages, tools, params, false).dump();
  auto res = client.Post(prefix_ + "/v1/chat/completions", auth_headers(config_), body, "application/json");
  if (!res) {
    throw Error(ErrorCode::kProviderUnreachable, origin_ + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kProviderUnreachable,
                origin_ + " answered HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  return parse_response(res->body);
}

ChatMessage HttpProvider::stream_complete(const std::vector<ChatMessage>& messages,
                                          const std::vector<ToolSchema>& tools, const CompletionParams& params,
                                          const ChunkSink& sink) {
  check_request(messages, tools);
  httplib::Client client(origin_);
  client.set_connection_timeout(config_.connect_timeout);
  client.set_read_timeout(config_.read_timeout);

  std::string pending;
  std::string raw;
  std::string content;
  bool done = false;
  bool received_any = false;
  std::map<int, json> partial_calls;  // index -> {id, name, arguments(string)}
  std::optional<Error> parse_failure;

  const auto handle_line = [&](std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("data:", 0) != 0) return;
    auto payload = line.substr(5);
    if (!payload.empty() && payload.front() == ' ') payload.erase(0, 1);
    if (payload == "[DONE]") {
      done = true;
      return;
    }
    json doc;
    try {
      doc = json::parse(payload);
    } catch (const json::parse_error&) {
      parse_failure.emplace(ErrorCode::kMalformedResponse, "stream event is not JSON: " + payload);
      return;
    }
    const auto& choices = doc.value("choices", json::array());
    if (choices.empty()) return;
    const auto& delta = choices.at(0).value("delta", json::object());
    if (auto it = delta.find("content"); it != delta.end() && it->is_string() && !it->get<std::string>().empty()) {
      const auto piece = it->get<std::string>();
      content += piece;
      sink(piece);
    }
    if (auto it = delta.find("tool_calls"); it != delta.end() && it->is_array()) {
      for (const auto& tc : *it) {
        auto& acc = partial_calls[tc.value("index", 0)];
        if (acc.is_null()) acc = {{"id", ""}, {"name", ""}, {"arguments", ""}};
        if (tc.contains("id") && tc["id"].is_string()) acc["id"] = tc["id"];
        if (auto fn = tc.find("function"); fn != tc.end()) {
          if (fn->contains("name") && (*fn)["name"].is_string()) acc["name"] = (*fn)["name"];
          if (fn->contains("arguments") && (*fn)["arguments"].is_string()) {
            acc["arguments"] = acc["arguments"].get<std::string>() + (*fn)["arguments"].get<std::string>();
          }
        }
      }
    }
    if (choices.at(0).contains("finish_reason") && choices.at(0)["finish_reason"].is_string()) done = true;
  };

  httplib::Request req;
  req.method = "POST";
  req.path = prefix_ + "/v1/chat/completions";
  req.headers = auth_headers(config_);
  req.set_header("Content-Type", "application/json");
  req.set_header("Accept", "text/event-stream");
  req.body = request_body(messages, tools, params, true).dump();
  req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
    received_any = true;
    raw.append(data, len);
    pending.append(data, len);
    std::size_t pos;
    while ((pos = pending.find('\n')) != std::string::npos) {
      handle_line(pending.substr(0, pos));
      pending.erase(0, pos + 1);
    }
    return !parse_failure.has_value();
  };

  httplib::Response res;
  httplib::Error err = httplib::Error::Success;
  const bool ok = client.send(req, res, err);
  if (!pending.empty()) handle_line(pending);
  if (parse_failure) throw *parse_failure;
  if (!ok) {
    if (!received_any) throw Error(ErrorCode::kProviderUnreachable, origin_ + ": " + httplib::to_string(err));
    throw StreamInterrupted(origin_ + ": " + httplib::to_string(err), content);
  }
  if (res.status != 200) {
    throw Error(ErrorCode::kProviderUnreachable,
                origin_ + " answered HTTP " + std::to_string(res.status) + ": " + raw.substr(0, 200));
  }
  if (!done) throw StreamInterrupted("stream ended before completion", content);

  ChatMessage out = ChatMessage::assistant(content);
  if (!partial_calls.empty()) {
    const auto& acc = partial_calls.begin()->second;
    out.tool_call = parse_tool_call({{"id", acc["id"]},
                                     {"function", {{"name", acc["name"]}, {"arguments", acc["arguments"]}}}});
  }
  return out;
}

}  // namespace chatd::llm
