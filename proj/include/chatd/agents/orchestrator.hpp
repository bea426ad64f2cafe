#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatd/agents/guardrails.hpp"
#include "chatd/agents/session.hpp"
#include "chatd/coherence/digest.hpp"
#include "chatd/kg/graph.hpp"
#include "chatd/llm/provider.hpp"
#include "chatd/query/engine.hpp"
#include "chatd/research/literature.hpp"

namespace chatd::agents {

/// Shared, read-only inputs the agents work against.
struct Resources {
  const kg::KnowledgeGraph* graph = nullptr;
  const coherence::AnnotationMap* annotations = nullptr;
  research::SearchBackend* literature = nullptr;
};

struct OrchestratorConfig {
  std::size_t step_budget = kStepBudget;
  double summary_threshold = 4000.0;  // estimated tokens
  query::EngineConfig engine;
  std::size_t literature_limit = 10;
  /// Answers the paragraph support check; nullptr uses token overlap.
  llm::Provider* guard_provider = nullptr;
  const InjectionPatterns* patterns = nullptr;  // nullptr: bundled corpus
};

/// What a handler sees during one dispatch.
struct AgentContext {
  SessionState& state;
  llm::Provider& provider;
  const Resources& resources;
  const OrchestratorConfig& config;
  const EventSink& emit;
  std::string question;   // the user message of this turn
  std::string rationale;  // planner rationale for this dispatch

  const kg::KnowledgeGraph& graph() const;  // throws UnknownKg when absent

  /// Assigns the next tc id, appends the record and emits its event.
  const ToolCallRecord& record(ToolCallRecord r);
  /// Stores an artifact under the next analysis id.
  const Artifact& artifact(std::string kind, nlohmann::json data, std::optional<nlohmann::json> network = std::nullopt);
  /// Emits the network event of an artifact that has a payload.
  void publish(const Artifact& a);
};

struct HandlerResult {
  std::string input_digest;
  std::string output_digest;
};

using AgentHandler = std::function<HandlerResult(AgentContext&)>;

/// Action -> handler. FINALIZE is handled by the orchestrator itself.
class AgentRegistry {
 public:
  void set(Action action, AgentHandler handler);
  bool has(Action action) const;
  const AgentHandler& get(Action action) const;
  /// Throws IncompleteRegistry naming the first action without a handler.
  void check_complete() const;

 private:
  std::map<Action, AgentHandler> handlers_;
};

/// Whitespace token count of transcript and summary, times 1.3.
double estimate_tokens(const SessionState& state);

/// Compacts the transcript into the rolling summary when its estimate
/// exceeds `threshold`, or always when `force` is set. Returns true when
/// compaction happened. Provider failures leave the state unchanged.
bool summarize_memory(SessionState& state, llm::Provider& provider, double threshold, bool force = false);

/// Planner messages for the current state (exposed for tests).
std::vector<llm::ChatMessage> planner_messages(const SessionState& state);

/// Picks the next action. steps_remaining == 0 forces FINALIZE without a
/// provider call; an invalid reply gets one re-prompt and marks the plan
/// degraded, and a second invalid reply or a provider failure degrades to
/// FINALIZE.
PlannedAction plan_next(const SessionState& state, llm::Provider& provider);

struct FinalAnswer {
  std::string text;
  std::vector<std::string> citations;  // every id the answer was allowed to cite
  std::size_t removed_paragraphs = 0;
  bool refused = false;
};

/// Citable ids in the session: tool-call ids, then paper ids from
/// literature artifacts.
std::vector<std::string> session_citations(const SessionState& state);

/// Support context for the output guardrail.
GuardContext guard_context(const SessionState& state, std::string_view question);

/// Streams the answer paragraph by paragraph through the output guardrail,
/// emitting token events for what survives, then the final event.
FinalAnswer finalize(SessionState& state, llm::Provider& provider, const EventSink& emit,
                     llm::Provider* guard_provider = nullptr);

struct TurnResult {
  FinalAnswer answer;
  std::vector<PlannedAction> plan;
  std::size_t dispatches = 0;
  std::vector<nlohmann::json> events;
};

/// One user turn: input guardrail, memory compaction, plan/dispatch loop
/// within the step budget, finalize. Events go to `sink` as they happen and
/// are also collected in the result. Provider failures during finalize emit
/// an error event and are rethrown.
TurnResult run_turn(SessionState& state, std::string_view user_text, const AgentRegistry& registry,
                    llm::Provider& provider, const Resources& resources, const OrchestratorConfig& config = {},
                    const EventSink& sink = {});

}  // namespace chatd::agents
