#pragma once

#include <chrono>
#include <string>

#include "chatd/llm/provider.hpp"

namespace chatd::llm {

struct HttpProviderConfig {
  std::string base_url = "http://localhost:11434";  // scheme://host[:port][/prefix]
  std::string model = "gpt-oss:20b";
  std::string api_key;
  std::chrono::seconds connect_timeout{10};
  std::chrono::seconds read_timeout{300};

  /// Reads CHATD_MODEL_URL, CHATD_MODEL_NAME and CHATD_API_KEY over the defaults.
  static HttpProviderConfig from_env();
};

/// Client for OpenAI-compatible chat-completion servers
/// (POST {base}/v1/chat/completions).
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config);

  ChatMessage complete(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools,
                       const CompletionParams& params) override;
  ChatMessage stream_complete(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools,
                              const CompletionParams& params, const ChunkSink& sink) override;
  std::string name() const override { return "http:" + config_.model; }

  const HttpProviderConfig& config() const { return config_; }

  /// Request body as sent on the wire (exposed for tests).
  nlohmann::json request_body(const std::vector<ChatMessage>& messages, const std::vector<ToolSchema>& tools,
                              const CompletionParams& params, bool stream) const;

  /// Parses a non-streaming chat-completions response body.
  static ChatMessage parse_response(const std::string& body);

 private:
  HttpProviderConfig config_;
  std::string origin_;  // scheme://host:port
  std::string prefix_;  // path prefix, no trailing slash
};

}  // namespace chatd::llm
