#include "chatd/llm/provider.hpp"

#include <set>

namespace chatd::llm {

using nlohmann::json;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
    case Role::kTool: return "tool";
  }
  return "user";
}

std::optional<Role> parse_role(std::string_view text) {
  if (text == "system") return Role::kSystem;
  if (text == "user") return Role::kUser;
  if (text == "assistant") return Role::kAssistant;
  if (text == "tool") return Role::kTool;
  return std::nullopt;
}

void to_json(json& out, const ChatMessage& msg) {
  out = {{"role", to_string(msg.role)}, {"content", msg.content}};
  if (msg.tool_call) {
    out["tool_call"] = {{"id", msg.tool_call->id}, {"name", msg.tool_call->name},
                        {"arguments", msg.tool_call->arguments}};
  }
  if (msg.tool_call_id) out["tool_call_id"] = *msg.tool_call_id;
}

void from_json(const json& in, ChatMessage& msg) {
  auto role = parse_role(in.at("role").get<std::string>());
  if (!role) throw Error(ErrorCode::kMalformedResponse, "unknown role " + in.at("role").dump());
  msg.role = *role;
  msg.content = in.value("content", std::string{});
  msg.tool_call.reset();
  msg.tool_call_id.reset();
  if (auto it = in.find("tool_call"); it != in.end() && it->is_object()) {
    ToolCall call;
    call.id = it->value("id", std::string{});
    call.name = it->at("name").get<std::string>();
    call.arguments = it->value("arguments", json::object());
    msg.tool_call = std::move(call);
  }
  if (auto it = in.find("tool_call_id"); it != in.end() && it->is_string()) {
    msg.tool_call_id = it->get<std::string>();
  }
}

namespace {

std::optional<std::string> check_value(const json& schema, const json& value, const std::string& path) {
  if (auto it = schema.find("enum"); it != schema.end()) {
    bool found = false;
    for (const auto& allowed : *it) found = found || allowed == value;
    if (!found) return path + ": value " + value.dump() + " not in enum";
  }
  const auto type = schema.value("type", std::string{});
  if (type == "object") {
    if (!value.is_object()) return path + ": expected object";
    const auto props = schema.value("properties", json::object());
    for (const auto& req : schema.value("required", json::array())) {
      if (!value.contains(req.get<std::string>())) {
        return path + ": missing required property '" + req.get<std::string>() + "'";
      }
    }
    const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"] == false;
    for (const auto& [key, sub] : value.items()) {
      auto prop = props.find(key);
      if (prop == props.end()) {
        if (closed) return path + ": unexpected property '" + key + "'";
        continue;
      }
      if (auto err = check_value(*prop, sub, path + "." + key)) return err;
    }
  } else if (type == "array") {
    if (!value.is_array()) return path + ": expected array";
    if (auto it = schema.find("minItems"); it != schema.end() && value.size() < it->get<std::size_t>()) {
      return path + ": expected at least " + it->dump() + " items";
    }
    if (auto items = schema.find("items"); items != schema.end()) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (auto err = check_value(*items, value[i], path + "[" + std::to_string(i) + "]")) return err;
      }
    }
  } else if (type == "string") {
    if (!value.is_string()) return path + ": expected string";
  } else if (type == "integer") {
    if (!value.is_number_integer()) return path + ": expected integer";
  } else if (type == "number") {
    if (!value.is_number()) return path + ": expected number";
  } else if (type == "boolean") {
    if (!value.is_boolean()) return path + ": expected boolean";
  }
  if (value.is_number()) {
    if (auto it = schema.find("minimum"); it != schema.end() && value.get<double>() < it->get<double>()) {
      return path + ": below minimum " + it->dump();
    }
    if (auto it = schema.find("maximum"); it != schema.end() && value.get<double>() > it->get<double>()) {
      return path + ": above maximum " + it->dump();
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> validate_arguments(const ToolSchema& schema, const json& arguments) {
  json root = schema.parameters;
  if (!root.contains("type")) root["type"] = "object";
  return check_value(root, arguments, schema.name);
}

void check_request(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools) {
  if (messages.empty()) throw Error(ErrorCode::kInvalidParams, "completion request without messages");
  std::set<std::string> names;
  for (const auto& t : tools) {
    if (!names.insert(t.name).second) throw Error(ErrorCode::kInvalidParams, "duplicate tool '" + t.name + "'");
  }
  std::set<std::string> calls;
  for (const auto& m : messages) {
    if (m.tool_call) calls.insert(m.tool_call->id);
    if (m.role == Role::kTool && (!m.tool_call_id || calls.count(*m.tool_call_id) == 0)) {
      throw Error(ErrorCode::kInvalidParams, "tool message does not answer a prior tool call");
    }
  }
}

ChatMessage Provider::stream_complete(const std::vector<ChatMessage>& messages,
                                      const std::vector<ToolSchema>& tools,
                                      const CompletionParams& params, const ChunkSink& sink) {
  auto msg = complete(messages, tools, params);
  if (!msg.content.empty()) sink(msg.content);
  return msg;
}

}  // namespace chatd::llm
