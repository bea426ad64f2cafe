#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatd/llm/provider.hpp"

namespace chatd::agents {

/// Dispatches allowed per turn before FINALIZE is forced.
inline constexpr std::size_t kStepBudget = 6;

enum class Action {
  kSummary,
  kFetchKg,
  kCallNedrexTool,
  kCallDigestTool,
  kFetchResearch,
  kAdjustNetwork,
  kFinalize,
};

inline constexpr std::array<Action, 7> kAllActions = {
    Action::kSummary,        Action::kFetchKg,       Action::kCallNedrexTool, Action::kCallDigestTool,
    Action::kFetchResearch, Action::kAdjustNetwork, Action::kFinalize};

std::string_view to_string(Action action);
std::optional<Action> parse_action(std::string_view text);

struct PlannedAction {
  Action action = Action::kFinalize;
  std::string rationale;
  bool degraded = false;  // planner reply was invalid twice, or the provider failed
  bool forced = false;    // budget exhausted; no provider call was made
};

struct ToolCallRecord {
  std::string id;  // tc-N, unique per session
  std::string agent;
  std::string tool;
  nlohmann::json arguments = nlohmann::json::object();
  bool ok = true;
  std::string error;
  double duration_ms = 0.0;  // kept in state, never in events
  std::string result_digest;
  std::optional<nlohmann::json> rows;  // returned records (KG queries)
  std::optional<std::string> analysis_id;

  /// Event form: everything except duration.
  nlohmann::json to_event_json() const;
};

struct AgentOutput {
  Action action = Action::kFinalize;
  std::string input_digest;
  std::string output_digest;
  bool ok = true;
};

/// Analysis product kept for later steps and the network endpoint.
struct Artifact {
  std::string id;    // analysis-N
  std::string kind;  // module, ranking, coherence, kg_result, literature
  nlohmann::json data;
  std::optional<nlohmann::json> network;  // NetworkPayload JSON when renderable
};

struct SessionState {
  std::vector<llm::ChatMessage> transcript;
  std::string rolling_summary;
  std::size_t steps_remaining = kStepBudget;
  std::vector<AgentOutput> agent_outputs;  // current turn only
  std::vector<ToolCallRecord> tool_calls;  // whole session
  std::vector<Artifact> artifacts;
  std::map<std::string, std::vector<std::string>> agent_memory;  // per-agent notes, cleared on compaction
  std::size_t turn = 0;
  std::size_t next_tool_call = 1;
  std::size_t next_analysis = 1;

  std::string new_tool_call_id() { return "tc-" + std::to_string(next_tool_call++); }
  std::string new_analysis_id() { return "analysis-" + std::to_string(next_analysis++); }

  const Artifact* find_artifact(std::string_view id) const;
  Artifact& add_artifact(std::string kind, nlohmann::json data, std::optional<nlohmann::json> network = std::nullopt);

  /// Most recent user message, or empty.
  std::string last_user_message() const;

  nlohmann::json to_json() const;
  static SessionState from_json(const nlohmann::json& doc);
};

/// Streaming consumer of turn events. Event objects carry a "type" of
/// plan_step, tool_call, network, token, final or error.
using EventSink = std::function<void(const nlohmann::json&)>;

namespace events {
nlohmann::json plan_step(std::size_t turn, std::size_t step, const PlannedAction& plan, std::size_t steps_remaining);
nlohmann::json tool_call(std::size_t turn, const ToolCallRecord& record);
nlohmann::json network(std::size_t turn, const std::string& analysis_id, const nlohmann::json& payload);
nlohmann::json token(std::size_t turn, const std::string& text);
nlohmann::json final_answer(std::size_t turn, const std::string& text, const std::vector<std::string>& citations,
                            std::size_t removed_paragraphs, bool refused);
nlohmann::json error(std::size_t turn, const std::string& code, const std::string& message);
}  // namespace events

}  // namespace chatd::agents
