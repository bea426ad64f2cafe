#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatd/error.hpp"

namespace chatd::llm {

enum class Role { kSystem, kUser, kAssistant, kTool };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

struct ToolCall {
  std::string id;
  std::string name;
  nlohmann::json arguments = nlohmann::json::object();
};

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;
  std::optional<ToolCall> tool_call;    // assistant messages only
  std::optional<std::string> tool_call_id;  // tool messages: the call they answer

  static ChatMessage system(std::string text) { return {Role::kSystem, std::move(text), {}, {}}; }
  static ChatMessage user(std::string text) { return {Role::kUser, std::move(text), {}, {}}; }
  static ChatMessage assistant(std::string text) { return {Role::kAssistant, std::move(text), {}, {}}; }
  static ChatMessage tool_result(std::string call_id, std::string text) {
    return {Role::kTool, std::move(text), {}, std::move(call_id)};
  }
};

void to_json(nlohmann::json& out, const ChatMessage& msg);
void from_json(const nlohmann::json& in, ChatMessage& msg);

/// Function-style tool declaration. `parameters` is a JSON-schema subset:
/// an object schema with typed properties and a "required" list.
struct ToolSchema {
  std::string name;
  std::string description;
  nlohmann::json parameters = nlohmann::json::object();
};

/// Returns an error description, or nullopt when `arguments` satisfies the
/// schema. Supported keywords: type (object, string, integer, number,
/// boolean, array), properties, required, items, enum, minimum, maximum,
/// minItems, additionalProperties=false.
std::optional<std::string> validate_arguments(const ToolSchema& schema, const nlohmann::json& arguments);

/// Checks that tool messages answer an earlier tool call and tool names are unique.
void check_request(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools);

struct CompletionParams {
  double temperature = 0.0;
  int max_tokens = 1024;
};

using ChunkSink = std::function<void(std::string_view)>;

/// Raised by stream_complete when the transport drops mid-response.
class StreamInterrupted : public Error {
 public:
  StreamInterrupted(const std::string& detail, std::string partial)
      : Error(ErrorCode::kStreamInterrupted, detail), partial_(std::move(partial)) {}
  const std::string& partial() const { return partial_; }

 private:
  std::string partial_;
};

/// Stateless chat-completion backend. Every call carries its full context;
/// implementations never retain conversation state between calls.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual ChatMessage complete(const std::vector<ChatMessage>& messages,
                               const std::vector<ToolSchema>& tools,
                               const CompletionParams& params) = 0;

  /// Delivers content chunks in order; the returned message equals their
  /// concatenation. The default delivers the whole content as one chunk.
  virtual ChatMessage stream_complete(const std::vector<ChatMessage>& messages,
                                      const std::vector<ToolSchema>& tools,
                                      const CompletionParams& params, const ChunkSink& sink);

  virtual std::string name() const = 0;
};

}  // namespace chatd::llm
