#include "chatd/agents/orchestrator.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "chatd/prompts.hpp"

namespace chatd::agents {

using nlohmann::json;

namespace {

// Transport-level failures degrade gracefully; script bugs must surface.
bool is_transient(const Error& e) {
  return e.code() == ErrorCode::kProviderUnreachable || e.code() == ErrorCode::kMalformedResponse ||
         e.code() == ErrorCode::kStreamInterrupted;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

std::string action_list() {
  std::string out;
  for (auto a : kAllActions) out += "- " + std::string(to_string(a)) + "\n";
  return out;
}

std::string outputs_digest(const SessionState& state) {
  if (state.agent_outputs.empty()) return "(none)";
  std::string out;
  for (std::size_t i = 0; i < state.agent_outputs.size(); ++i) {
    const auto& o = state.agent_outputs[i];
    out += std::to_string(i + 1) + ". " + std::string(to_string(o.action)) + (o.ok ? " ok: " : " failed: ") +
           o.output_digest + "\n";
  }
  return out;
}

// "ACTION -> rationale"; tolerates markdown emphasis and quotes around the name.
std::optional<PlannedAction> parse_plan(const std::string& reply) {
  const auto line = lines_of(reply);
  if (line.empty()) return std::nullopt;
  const auto& first = line.front();
  const auto arrow = first.find("->");
  std::string name = trim(first.substr(0, arrow));
  name.erase(std::remove_if(name.begin(), name.end(), [](char c) { return c == '*' || c == '`' || c == '"'; }),
             name.end());
  const auto action = parse_action(trim(name));
  if (!action) return std::nullopt;
  PlannedAction plan;
  plan.action = *action;
  if (arrow != std::string::npos) plan.rationale = trim(first.substr(arrow + 2));
  return plan;
}

}  // namespace

const kg::KnowledgeGraph& AgentContext::graph() const {
  if (!resources.graph) throw Error(ErrorCode::kUnknownKg, "no knowledge graph loaded");
  return *resources.graph;
}

const ToolCallRecord& AgentContext::record(ToolCallRecord r) {
  r.id = state.new_tool_call_id();
  state.tool_calls.push_back(std::move(r));
  if (emit) emit(events::tool_call(state.turn, state.tool_calls.back()));
  return state.tool_calls.back();
}

const Artifact& AgentContext::artifact(std::string kind, json data, std::optional<json> network) {
  return state.add_artifact(std::move(kind), std::move(data), std::move(network));
}

void AgentContext::publish(const Artifact& a) {
  if (a.network && emit) emit(events::network(state.turn, a.id, *a.network));
}

void AgentRegistry::set(Action action, AgentHandler handler) {
  if (action == Action::kFinalize) throw Error(ErrorCode::kInvalidParams, "FINALIZE is not dispatchable");
  handlers_[action] = std::move(handler);
}

bool AgentRegistry::has(Action action) const { return handlers_.count(action) > 0; }

const AgentHandler& AgentRegistry::get(Action action) const {
  auto it = handlers_.find(action);
  if (it == handlers_.end()) throw Error(ErrorCode::kIncompleteRegistry, "no handler for " + std::string(to_string(action)));
  return it->second;
}

void AgentRegistry::check_complete() const {
  for (auto a : kAllActions) {
    if (a != Action::kFinalize && !has(a)) {
      throw Error(ErrorCode::kIncompleteRegistry, "no handler for " + std::string(to_string(a)));
    }
  }
}

double estimate_tokens(const SessionState& state) {
  std::size_t words = 0;
  const auto count = [&](const std::string& text) {
    std::istringstream in(text);
    std::string w;
    while (in >> w) ++words;
  };
  for (const auto& m : state.transcript) count(m.content);
  count(state.rolling_summary);
  return static_cast<double>(words) * 1.3;
}

bool summarize_memory(SessionState& state, llm::Provider& provider, double threshold, bool force) {
  if (!force && estimate_tokens(state) <= threshold) return false;
  std::vector<llm::ChatMessage> messages = {llm::ChatMessage::system(prompts::render_named(
      "summary", {{"summary", state.rolling_summary.empty() ? "(none)" : state.rolling_summary}}))};
  for (const auto& m : state.transcript) {
    if (m.role == llm::Role::kUser || m.role == llm::Role::kAssistant) {
      messages.push_back(m.role == llm::Role::kUser ? llm::ChatMessage::user(m.content)
                                                    : llm::ChatMessage::assistant(m.content));
    }
  }
  std::string summary;
  try {
    summary = trim(provider.complete(messages, {}, {}).content);
  } catch (const Error& e) {
    if (!is_transient(e)) throw;
    spdlog::warn("summary skipped: {}", e.what());
    return false;
  }
  if (summary.empty()) {
    spdlog::warn("summary skipped: empty reply");
    return false;
  }
  const auto last = state.last_user_message();
  state.rolling_summary = std::move(summary);
  state.transcript.clear();
  if (!last.empty()) state.transcript.push_back(llm::ChatMessage::user(last));
  state.agent_memory.clear();
  return true;
}

std::vector<llm::ChatMessage> planner_messages(const SessionState& state) {
  std::vector<llm::ChatMessage> messages = {llm::ChatMessage::system(prompts::render_named(
      "planner", {{"actions", action_list()},
                  {"steps_remaining", std::to_string(state.steps_remaining)},
                  {"summary", state.rolling_summary.empty() ? "(none)" : state.rolling_summary},
                  {"outputs", outputs_digest(state)}}))};
  for (const auto& m : state.transcript) {
    if (m.role == llm::Role::kUser || m.role == llm::Role::kAssistant) messages.push_back(m);
  }
  return messages;
}

PlannedAction plan_next(const SessionState& state, llm::Provider& provider) {
  if (state.steps_remaining == 0) {
    PlannedAction forced;
    forced.forced = true;
    forced.rationale = "step budget exhausted";
    return forced;
  }
  auto messages = planner_messages(state);
  const auto degrade = [](std::string why) {
    spdlog::warn("planner degraded to FINALIZE: {}", why);
    PlannedAction p;
    p.degraded = true;
    p.rationale = std::move(why);
    return p;
  };
  try {
    auto reply = provider.complete(messages, {}, {});
    if (auto plan = parse_plan(reply.content)) return *plan;
    const auto bad = reply.content;
    messages.push_back(llm::ChatMessage::assistant(bad));
    messages.push_back(llm::ChatMessage::user("'" + trim(bad) + "' is not a valid action. Reply with one line " +
                                              "ACTION -> rationale, where ACTION is one of:\n" + action_list()));
    reply = provider.complete(messages, {}, {});
    if (auto plan = parse_plan(reply.content)) {
      plan->degraded = true;
      spdlog::warn("planner needed a re-prompt; chose {}", to_string(plan->action));
      return *plan;
    }
    return degrade("planner reply invalid twice");
  } catch (const Error& e) {
    if (!is_transient(e)) throw;
    return degrade(std::string("planner unavailable: ") + e.what());
  }
}

std::vector<std::string> session_citations(const SessionState& state) {
  std::vector<std::string> out;
  for (const auto& r : state.tool_calls) out.push_back(r.id);
  std::set<std::string> seen;
  for (const auto& a : state.artifacts) {
    if (a.kind != "literature") continue;
    for (const auto& rec : a.data.value("records", json::array())) {
      const auto id = "paper:" + rec.value("id", std::string{});
      if (seen.insert(id).second) out.push_back(id);
    }
  }
  return out;
}

GuardContext guard_context(const SessionState& state, std::string_view question) {
  GuardContext ctx;
  const auto add = [&](const std::string& text) {
    if (text.empty()) return;
    ctx.segments.push_back(text);
    const auto lines = lines_of(text);
    if (lines.size() > 1) ctx.segments.insert(ctx.segments.end(), lines.begin(), lines.end());
  };
  ctx.segments.emplace_back(question);
  for (const auto& o : state.agent_outputs) add(o.output_digest);
  for (const auto& r : state.tool_calls) add(r.result_digest);
  add(state.rolling_summary);
  for (auto& id : session_citations(state)) ctx.citations.insert(std::move(id));
  return ctx;
}

FinalAnswer finalize(SessionState& state, llm::Provider& provider, const EventSink& emit, llm::Provider* guard_provider) {
  FinalAnswer answer;
  answer.citations = session_citations(state);
  const auto question = state.last_user_message();
  if (state.agent_outputs.empty()) {
    answer.text = prompts::get("clarify");
    while (!answer.text.empty() && answer.text.back() == '\n') answer.text.pop_back();
    if (emit) emit(events::token(state.turn, answer.text));
    if (emit) emit(events::final_answer(state.turn, answer.text, answer.citations, 0, false));
    return answer;
  }

  std::string context;
  for (const auto& o : state.agent_outputs) {
    context += std::string(to_string(o.action)) + (o.ok ? ": " : " (failed): ") + o.output_digest + "\n";
  }
  for (const auto& r : state.tool_calls) {
    context += "[" + r.id + "] " + r.tool + (r.ok ? ": " + r.result_digest : " failed: " + r.error) + "\n";
  }
  std::string cite_list;
  for (const auto& c : answer.citations) cite_list += (cite_list.empty() ? "" : ", ") + ("[" + c + "]");
  if (cite_list.empty()) cite_list = "(none)";

  const std::vector<llm::ChatMessage> messages = {
      llm::ChatMessage::system(prompts::render_named(
          "finalize", {{"question", question}, {"context", context}, {"citations", cite_list}})),
      llm::ChatMessage::user(question)};

  const auto ctx = guard_context(state, question);
  std::string buffer;
  bool first = true;
  const auto release = [&](const std::string& paragraph) {
    auto text = trim(paragraph);
    if (text.empty()) return;
    const auto verdict = check_paragraph(text, ctx, guard_provider);
    if (!verdict.kept) {
      spdlog::info("removed paragraph: {}", verdict.reason);
      ++answer.removed_paragraphs;
      text = std::string(kOmissionMarker);
    }
    const auto chunk = (first ? "" : "\n\n") + text;
    first = false;
    answer.text += chunk;
    if (emit) emit(events::token(state.turn, chunk));
  };
  provider.stream_complete(messages, {}, {}, [&](std::string_view piece) {
    buffer += piece;
    for (auto pos = buffer.find("\n\n"); pos != std::string::npos; pos = buffer.find("\n\n")) {
      release(buffer.substr(0, pos));
      buffer.erase(0, pos + 2);
    }
  });
  release(buffer);
  if (emit) emit(events::final_answer(state.turn, answer.text, answer.citations, answer.removed_paragraphs, false));
  return answer;
}

TurnResult run_turn(SessionState& state, std::string_view user_text, const AgentRegistry& registry,
                    llm::Provider& provider, const Resources& resources, const OrchestratorConfig& config,
                    const EventSink& sink) {
  registry.check_complete();
  TurnResult result;
  const EventSink emit = [&](const json& event) {
    result.events.push_back(event);
    if (sink) sink(event);
  };

  ++state.turn;
  state.agent_outputs.clear();
  state.steps_remaining = config.step_budget;
  const std::string text(user_text);

  const auto verdict = config.patterns ? input_guardrail(text, *config.patterns) : input_guardrail(text);
  if (!verdict.allowed) {
    spdlog::warn("input blocked by pattern {}", verdict.matched_pattern.value_or(""));
    result.answer.text = trim(prompts::get("refusal"));
    result.answer.refused = true;
    state.transcript.push_back(llm::ChatMessage::user(text));
    state.transcript.push_back(llm::ChatMessage::assistant(result.answer.text));
    emit(events::final_answer(state.turn, result.answer.text, {}, 0, true));
    return result;
  }

  state.transcript.push_back(llm::ChatMessage::user(text));

  // Every failure ends the event stream with an error event.
  try {
    summarize_memory(state, provider, config.summary_threshold);
    for (std::size_t step = 1;; ++step) {
      const auto plan = plan_next(state, provider);
      result.plan.push_back(plan);
      emit(events::plan_step(state.turn, step, plan, state.steps_remaining));
      if (plan.action == Action::kFinalize) break;
      --state.steps_remaining;
      ++result.dispatches;

      AgentContext ctx{state, provider, resources, config, emit, text, plan.rationale};
      AgentOutput out;
      out.action = plan.action;
      out.input_digest = text;
      try {
        auto r = registry.get(plan.action)(ctx);
        if (!r.input_digest.empty()) out.input_digest = std::move(r.input_digest);
        out.output_digest = std::move(r.output_digest);
      } catch (const Error& e) {
        if (e.is_provider_error() && !is_transient(e)) throw;
        spdlog::warn("{} failed: {}", to_string(plan.action), e.what());
        out.ok = false;
        out.output_digest = e.what();
      }
      state.agent_outputs.push_back(std::move(out));
    }
    result.answer = finalize(state, provider, emit, config.guard_provider);
  } catch (const Error& e) {
    emit(events::error(state.turn, std::string(to_string(e.code())), e.what()));
    throw;
  } catch (const std::exception& e) {
    emit(events::error(state.turn, "Internal", e.what()));
    throw;
  }
  state.transcript.push_back(llm::ChatMessage::assistant(result.answer.text));
  return result;
}

}  // namespace chatd::agents
