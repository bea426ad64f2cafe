#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "chatd/llm/provider.hpp"

namespace chatd::llm {

/// Conditions a request must meet for a scripted exchange to answer it. Every
/// populated field must hold; an empty predicate matches anything.
struct PromptPredicate {
  std::optional<std::string> system_contains;  // first system message
  std::optional<std::string> user_contains;    // last user message
  std::optional<std::string> contains;         // any message
  std::optional<std::vector<std::string>> tools;  // exact offered tool names, any order

  bool matches(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& offered) const;
  std::string describe() const;
};

struct ScriptedExchange {
  PromptPredicate expect;
  ChatMessage response = ChatMessage::assistant("");
  std::vector<std::string> chunks;  // streaming split; empty = whole content
  std::optional<ErrorCode> fail;    // simulate a transport failure instead
  std::string label;
};

/// Script file parsing; ParseError on a malformed document, Io on a missing file.
std::vector<ScriptedExchange> parse_script(const nlohmann::json& doc);
std::vector<ScriptedExchange> load_script(const std::filesystem::path& path);

/// Replays canned exchanges strictly in order. Script files are JSON:
///   {"exchanges": [{"label": "...", "expect": {"system_contains": "..."},
///                   "response": {"content": "...", "tool_call": {"name", "arguments"}},
///                   "chunks": ["..."], "fail": "ProviderUnreachable"}]}
class ScriptedProvider : public Provider {
 public:
  explicit ScriptedProvider(std::vector<ScriptedExchange> script);

  static ScriptedProvider from_json(const nlohmann::json& doc);
  static ScriptedProvider load(const std::filesystem::path& path);

  ChatMessage complete(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools,
                       const CompletionParams& params) override;
  ChatMessage stream_complete(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools,
                              const CompletionParams& params, const ChunkSink& sink) override;
  std::string name() const override { return "scripted"; }

  /// Rewinds the script and clears captured prompts.
  void reset();
  std::size_t remaining() const;
  std::size_t consumed() const;
  /// Every request received, in order.
  std::vector<std::vector<ChatMessage>> captured() const;

 private:
  const ScriptedExchange& next(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools);

  std::vector<ScriptedExchange> script_;
  mutable std::mutex mutex_;
  std::size_t cursor_ = 0;
  std::size_t tool_call_counter_ = 0;
  std::vector<std::vector<ChatMessage>> captured_;
};

}  // namespace chatd::llm
