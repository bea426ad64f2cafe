#include "chatd/agents/session.hpp"

#include <algorithm>

namespace chatd::agents {

using nlohmann::json;

std::string_view to_string(Action action) {
  switch (action) {
    case Action::kSummary: return "SUMMARY";
    case Action::kFetchKg: return "FETCH_KG";
    case Action::kCallNedrexTool: return "CALL_NEDREX_TOOL";
    case Action::kCallDigestTool: return "CALL_DIGEST_TOOL";
    case Action::kFetchResearch: return "FETCH_RESEARCH";
    case Action::kAdjustNetwork: return "ADJUST_NETWORK";
    case Action::kFinalize: return "FINALIZE";
  }
  return "FINALIZE";
}

std::optional<Action> parse_action(std::string_view text) {
  for (auto a : kAllActions) {
    if (to_string(a) == text) return a;
  }
  return std::nullopt;
}

json ToolCallRecord::to_event_json() const {
  json out = {{"id", id},
              {"agent", agent},
              {"tool", tool},
              {"arguments", arguments},
              {"status", ok ? "ok" : "error"},
              {"result_digest", result_digest}};
  if (!ok) out["error"] = error;
  if (rows) out["rows"] = *rows;
  if (analysis_id) out["analysis_id"] = *analysis_id;
  return out;
}

const Artifact* SessionState::find_artifact(std::string_view id) const {
  auto it = std::find_if(artifacts.begin(), artifacts.end(), [&](const Artifact& a) { return a.id == id; });
  return it == artifacts.end() ? nullptr : &*it;
}

Artifact& SessionState::add_artifact(std::string kind, json data, std::optional<json> network) {
  artifacts.push_back({new_analysis_id(), std::move(kind), std::move(data), std::move(network)});
  return artifacts.back();
}

std::string SessionState::last_user_message() const {
  for (auto it = transcript.rbegin(); it != transcript.rend(); ++it) {
    if (it->role == llm::Role::kUser) return it->content;
  }
  return {};
}

json SessionState::to_json() const {
  json outputs = json::array();
  for (const auto& o : agent_outputs) {
    outputs.push_back({{"action", to_string(o.action)},
                       {"input", o.input_digest},
                       {"output", o.output_digest},
                       {"ok", o.ok}});
  }
  json calls = json::array();
  for (const auto& c : tool_calls) {
    auto item = c.to_event_json();
    item["duration_ms"] = c.duration_ms;
    calls.push_back(std::move(item));
  }
  json arts = json::array();
  for (const auto& a : artifacts) {
    json item = {{"id", a.id}, {"kind", a.kind}, {"data", a.data}};
    if (a.network) item["network"] = *a.network;
    arts.push_back(std::move(item));
  }
  return {{"transcript", transcript},
          {"rolling_summary", rolling_summary},
          {"steps_remaining", steps_remaining},
          {"agent_outputs", outputs},
          {"tool_calls", calls},
          {"artifacts", arts},
          {"agent_memory", agent_memory},
          {"turn", turn},
          {"next_tool_call", next_tool_call},
          {"next_analysis", next_analysis}};
}

SessionState SessionState::from_json(const json& doc) {
  SessionState s;
  try {
    s.transcript = doc.value("transcript", json::array()).get<std::vector<llm::ChatMessage>>();
    s.rolling_summary = doc.value("rolling_summary", std::string{});
    s.steps_remaining = doc.value("steps_remaining", kStepBudget);
    for (const auto& o : doc.value("agent_outputs", json::array())) {
      auto action = parse_action(o.at("action").get<std::string>());
      if (!action) throw Error(ErrorCode::kParseError, "unknown action in snapshot");
      s.agent_outputs.push_back({*action, o.value("input", std::string{}), o.value("output", std::string{}),
                                 o.value("ok", true)});
    }
    for (const auto& c : doc.value("tool_calls", json::array())) {
      ToolCallRecord r;
      r.id = c.at("id").get<std::string>();
      r.agent = c.value("agent", std::string{});
      r.tool = c.value("tool", std::string{});
      r.arguments = c.value("arguments", json::object());
      r.ok = c.value("status", std::string("ok")) == "ok";
      r.error = c.value("error", std::string{});
      r.duration_ms = c.value("duration_ms", 0.0);
      r.result_digest = c.value("result_digest", std::string{});
      if (c.contains("rows")) r.rows = c["rows"];
      if (c.contains("analysis_id")) r.analysis_id = c["analysis_id"].get<std::string>();
      s.tool_calls.push_back(std::move(r));
    }
    for (const auto& a : doc.value("artifacts", json::array())) {
      Artifact art{a.at("id").get<std::string>(), a.value("kind", std::string{}), a.value("data", json::object()),
                   std::nullopt};
      if (a.contains("network")) art.network = a["network"];
      s.artifacts.push_back(std::move(art));
    }
    s.agent_memory = doc.value("agent_memory", std::map<std::string, std::vector<std::string>>{});
    s.turn = doc.value("turn", std::size_t{0});
    s.next_tool_call = doc.value("next_tool_call", std::size_t{1});
    s.next_analysis = doc.value("next_analysis", std::size_t{1});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("session snapshot: ") + e.what());
  }
  return s;
}

namespace events {

json plan_step(std::size_t turn, std::size_t step, const PlannedAction& plan, std::size_t steps_remaining) {
  return {{"type", "plan_step"},
          {"turn", turn},
          {"step", step},
          {"action", to_string(plan.action)},
          {"rationale", plan.rationale},
          {"steps_remaining", steps_remaining},
          {"degraded", plan.degraded},
          {"forced", plan.forced}};
}

json tool_call(std::size_t turn, const ToolCallRecord& record) {
  return {{"type", "tool_call"}, {"turn", turn}, {"record", record.to_event_json()}};
}

json network(std::size_t turn, const std::string& analysis_id, const json& payload) {
  return {{"type", "network"}, {"turn", turn}, {"analysis_id", analysis_id}, {"payload", payload}};
}

json token(std::size_t turn, const std::string& text) {
  return {{"type", "token"}, {"turn", turn}, {"text", text}};
}

json final_answer(std::size_t turn, const std::string& text, const std::vector<std::string>& citations,
                  std::size_t removed_paragraphs, bool refused) {
  return {{"type", "final"},
          {"turn", turn},
          {"text", text},
          {"citations", citations},
          {"removed_paragraphs", removed_paragraphs},
          {"refused", refused}};
}

json error(std::size_t turn, const std::string& code, const std::string& message) {
  return {{"type", "error"}, {"turn", turn}, {"code", code}, {"message", message}};
}

}  // namespace events

}  // namespace chatd::agents
