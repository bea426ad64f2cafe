#include "chatd/llm/scripted.hpp"

#include <algorithm>
#include <fstream>

namespace chatd::llm {

using nlohmann::json;

namespace {

ErrorCode parse_fail_code(const std::string& text) {
  if (text == "ProviderUnreachable") return ErrorCode::kProviderUnreachable;
  if (text == "MalformedResponse") return ErrorCode::kMalformedResponse;
  if (text == "StreamInterrupted") return ErrorCode::kStreamInterrupted;
  throw Error(ErrorCode::kParseError, "unknown scripted failure '" + text + "'");
}

}  // namespace

bool PromptPredicate::matches(const std::vector<ChatMessage>& messages,
                              const std::vector<ToolSchema>& offered) const {
  if (system_contains) {
    auto it = std::find_if(messages.begin(), messages.end(),
                           [](const ChatMessage& m) { return m.role == Role::kSystem; });
    if (it == messages.end() || it->content.find(*system_contains) == std::string::npos) return false;
  }
  if (user_contains) {
    auto it = std::find_if(messages.rbegin(), messages.rend(),
                           [](const ChatMessage& m) { return m.role == Role::kUser; });
    if (it == messages.rend() || it->content.find(*user_contains) == std::string::npos) return false;
  }
  if (contains) {
    bool found = std::any_of(messages.begin(), messages.end(), [&](const ChatMessage& m) {
      return m.content.find(*contains) != std::string::npos;
    });
    if (!found) return false;
  }
  if (tools) {
    std::vector<std::string> want = *tools;
    std::vector<std::string> got;
    for (const auto& t : offered) got.push_back(t.name);
    std::sort(want.begin(), want.end());
    std::sort(got.begin(), got.end());
    if (want != got) return false;
  }
  return true;
}

std::string PromptPredicate::describe() const {
  json d = json::object();
  if (system_contains) d["system_contains"] = *system_contains;
  if (user_contains) d["user_contains"] = *user_contains;
  if (contains) d["contains"] = *contains;
  if (tools) d["tools"] = *tools;
  return d.dump();
}

ScriptedProvider::ScriptedProvider(std::vector<ScriptedExchange> script) : script_(std::move(script)) {}

std::vector<ScriptedExchange> parse_script(const json& doc) {
  std::vector<ScriptedExchange> script;
  try {
    for (const auto& item : doc.at("exchanges")) {
      ScriptedExchange ex;
      ex.label = item.value("label", std::string{});
      if (auto it = item.find("expect"); it != item.end()) {
        if (it->contains("system_contains")) ex.expect.system_contains = it->at("system_contains").get<std::string>();
        if (it->contains("user_contains")) ex.expect.user_contains = it->at("user_contains").get<std::string>();
        if (it->contains("contains")) ex.expect.contains = it->at("contains").get<std::string>();
        if (it->contains("tools")) ex.expect.tools = it->at("tools").get<std::vector<std::string>>();
      }
      if (auto it = item.find("response"); it != item.end()) {
        ex.response.content = it->value("content", std::string{});
        if (auto tc = it->find("tool_call"); tc != it->end()) {
          ex.response.tool_call = ToolCall{tc->value("id", std::string{}), tc->at("name").get<std::string>(),
                                           tc->value("arguments", json::object())};
        }
      }
      ex.chunks = item.value("chunks", std::vector<std::string>{});
      if (!ex.chunks.empty() && ex.response.content.empty()) {
        for (const auto& c : ex.chunks) ex.response.content += c;
      }
      if (auto it = item.find("fail"); it != item.end()) ex.fail = parse_fail_code(it->get<std::string>());
      script.push_back(std::move(ex));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("script: ") + e.what());
  }
  return script;
}

std::vector<ScriptedExchange> load_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return parse_script(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

ScriptedProvider ScriptedProvider::from_json(const json& doc) { return ScriptedProvider(parse_script(doc)); }

ScriptedProvider ScriptedProvider::load(const std::filesystem::path& path) { return ScriptedProvider(load_script(path)); }

const ScriptedExchange& ScriptedProvider::next(const std::vector<ChatMessage>& messages,
                                               const std::vector<ToolSchema>& tools) {
  check_request(messages, tools);
  captured_.push_back(messages);
  if (cursor_ >= script_.size()) {
    throw Error(ErrorCode::kScriptExhausted, "no scripted exchange left (" + std::to_string(script_.size()) +
                                                 " consumed)");
  }
  const auto& ex = script_[cursor_];
  if (!ex.expect.matches(messages, tools)) {
    throw Error(ErrorCode::kScriptMismatch, "exchange " + std::to_string(cursor_ + 1) +
                                                (ex.label.empty() ? "" : " (" + ex.label + ")") +
                                                " expected " + ex.expect.describe());
  }
  ++cursor_;
  if (ex.fail && *ex.fail != ErrorCode::kStreamInterrupted) {
    throw Error(*ex.fail, "scripted failure" + (ex.label.empty() ? "" : " (" + ex.label + ")"));
  }
  return ex;
}

ChatMessage ScriptedProvider::complete(const std::vector<ChatMessage>& messages,
                                       const std::vector<ToolSchema>& tools, const CompletionParams&) {
  std::lock_guard lock(mutex_);
  const auto& ex = next(messages, tools);
  if (ex.fail) throw Error(*ex.fail, "scripted failure");
  ChatMessage out = ex.response;
  if (out.tool_call && out.tool_call->id.empty()) {
    out.tool_call->id = "call-" + std::to_string(++tool_call_counter_);
  }
  return out;
}

ChatMessage ScriptedProvider::stream_complete(const std::vector<ChatMessage>& messages,
                                              const std::vector<ToolSchema>& tools, const CompletionParams&,
                                              const ChunkSink& sink) {
  std::unique_lock lock(mutex_);
  const auto& ex = next(messages, tools);
  ChatMessage out = ex.response;
  std::vector<std::string> chunks = ex.chunks;
  if (chunks.empty() && !out.content.empty()) chunks.push_back(out.content);
  const bool interrupt = ex.fail.has_value();
  lock.unlock();

  std::string delivered;
  // A scripted interruption delivers every chunk but the last.
  const std::size_t upto = interrupt && !chunks.empty() ? chunks.size() - 1 : chunks.size();
  for (std::size_t i = 0; i < upto; ++i) {
    sink(chunks[i]);
    delivered += chunks[i];
  }
  if (interrupt) throw StreamInterrupted("scripted disconnect", delivered);
  if (out.tool_call && out.tool_call->id.empty()) {
    std::lock_guard relock(mutex_);
    out.tool_call->id = "call-" + std::to_string(++tool_call_counter_);
  }
  return out;
}

void ScriptedProvider::reset() {
  std::lock_guard lock(mutex_);
  cursor_ = 0;
  tool_call_counter_ = 0;
  captured_.clear();
}

std::size_t ScriptedProvider::remaining() const {
  std::lock_guard lock(mutex_);
  return script_.size() - cursor_;
}

std::size_t ScriptedProvider::consumed() const {
  std::lock_guard lock(mutex_);
  return cursor_;
}

std::vector<std::vector<ChatMessage>> ScriptedProvider::captured() const {
  std::lock_guard lock(mutex_);
  return captured_;
}

}  // namespace chatd::llm
