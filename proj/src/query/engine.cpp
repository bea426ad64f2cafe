#include "chatd/query/engine.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chatd/prompts.hpp"

namespace chatd::query {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& why) { throw Error(ErrorCode::kMalformedDecomposition, why); }

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string join(const std::vector<std::string>& items, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::string quote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\\' || c == '\'') out += '\\';
    out += c;
  }
  return out + "'";
}

// Best similarity of a node's name or synonyms against any of the queries.
double node_similarity(const kg::NodeRecord& node, const std::vector<Embedding>& queries, const Embedder& embedder) {
  double best = 0.0;
  const auto consider = [&](const std::string& label) {
    const auto e = embedder.embed(label);
    for (const auto& q : queries) best = std::max(best, cosine(e, q));
  };
  consider(node.name);
  for (const auto& s : node.synonyms) consider(s);
  return best;
}

bool by_similarity(const MatchCandidate& a, const MatchCandidate& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

bool retryable_provider_failure(const Error& e) {
  return e.code() == ErrorCode::kProviderUnreachable || e.code() == ErrorCode::kMalformedResponse ||
         e.code() == ErrorCode::kStreamInterrupted;
}

bool pipeline_failure(const Error& e) {
  switch (e.code()) {
    case ErrorCode::kMalformedDecomposition:
    case ErrorCode::kNoCandidates:
    case ErrorCode::kAmbiguousPath:
    case ErrorCode::kNoSchemaPath:
    case ErrorCode::kUnknownType:
      return true;
    default:
      return false;
  }
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "about", "all", "and", "any", "are", "can", "does", "for", "from", "give", "have", "how",
      "into", "list", "me", "of", "related", "relation", "show", "that", "the", "their", "there",
      "these", "this", "what", "which", "who", "with"};
  return words;
}

std::vector<std::string> content_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  const auto flush = [&] {
    if (cur.size() >= 3 && !stopwords().count(cur) &&
        std::find(words.begin(), words.end(), cur) == words.end()) {
      words.push_back(cur);
    }
    cur.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '-' || c == '\'') {
      cur += static_cast<char>(std::tolower(u));
    } else {
      flush();
    }
  }
  flush();
  return words;
}

}  // namespace

void EngineConfig::validate() const {
  if (top_n < 1) throw Error(ErrorCode::kInvalidParams, "top_n must be at least 1");
  if (retries < 1) throw Error(ErrorCode::kInvalidParams, "retry budget must be at least 1");
  if (!(similarity_floor >= 0.0 && similarity_floor <= 1.0)) {
    throw Error(ErrorCode::kInvalidParams, "similarity floor must lie in [0, 1]");
  }
}

QuestionList parse_question_list(std::string_view reply, const kg::Schema& schema) {
  const auto open = reply.find('{');
  const auto close = reply.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    malformed("reply holds no JSON object");
  }
  json doc;
  try {
    doc = json::parse(reply.substr(open, close - open + 1));
  } catch (const json::parse_error& e) {
    malformed(std::string("reply is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array()) malformed("missing \"nodes\" array");
  if (doc["nodes"].empty()) malformed("question list is empty");

  QuestionList out;
  std::optional<std::size_t> target;
  try {
    for (std::size_t i = 0; i < doc["nodes"].size(); ++i) {
      const auto& item = doc["nodes"][i];
      if (!item.is_object()) malformed("node " + std::to_string(i) + " is not an object");
      QuestionNode q;
      q.node_type = item.contains("type") ? item["type"].get<std::string>() : item.value("node_type", std::string{});
      if (!schema.has_node_type(q.node_type)) {
        malformed("node " + std::to_string(i) + " has unknown type '" + q.node_type + "'");
      }
      q.value = trim(item.value("value", std::string{}));
      q.subquestion = trim(item.value("subquestion", std::string{}));
      q.needs_filter = item.contains("filter") ? item["filter"].get<bool>() : item.value("needs_filter", false);
      if (q.needs_filter && q.value.empty()) {
        malformed("node " + std::to_string(i) + " needs a filter but has no value");
      }
      if (item.value("target", false)) {
        if (target) malformed("more than one target node");
        target = i;
      }
      out.nodes.push_back(std::move(q));
    }
    if (auto it = doc.find("target"); it != doc.end() && it->is_number_integer()) {
      const auto idx = it->get<std::int64_t>();
      if (idx < 0 || static_cast<std::size_t>(idx) >= out.nodes.size()) malformed("target index out of range");
      if (target && *target != static_cast<std::size_t>(idx)) malformed("conflicting target designations");
      target = static_cast<std::size_t>(idx);
    }
  } catch (const json::exception& e) {
    malformed(std::string("bad node field: ") + e.what());
  }
  if (!target) {
    target = out.nodes.size() - 1;
    for (std::size_t i = out.nodes.size(); i-- > 0;) {
      if (!out.nodes[i].needs_filter) {
        target = i;
        break;
      }
    }
  }
  out.target = *target;
  return out;
}

std::vector<llm::ChatMessage> decomposition_messages(std::string_view text, const kg::Schema& schema,
                                                     const std::vector<DecompositionAttempt>& feedback) {
  std::vector<llm::ChatMessage> msgs;
  msgs.push_back(llm::ChatMessage::system(
      prompts::render_named("kg_decompose", {{"node_types", join(schema.node_types(), ", ")}})));
  msgs.push_back(llm::ChatMessage::user(std::string(text)));
  for (const auto& f : feedback) {
    if (f.reply.empty()) continue;  // transport failures have nothing to correct
    msgs.push_back(llm::ChatMessage::assistant(f.reply));
    msgs.push_back(llm::ChatMessage::user("That question list could not be used: " + f.failure +
                                          "\nReturn a corrected question list as JSON."));
  }
  return msgs;
}

QuestionList decompose_question(std::string_view text, const kg::Schema& schema, llm::Provider& provider) {
  if (trim(text).empty()) throw Error(ErrorCode::kInvalidParams, "empty question");
  const auto reply = provider.complete(decomposition_messages(text, schema, {}), {}, {});
  return parse_question_list(reply.content, schema);
}

std::vector<MatchCandidate> match_candidates(const QuestionNode& qnode, const kg::KnowledgeGraph& graph,
                                             const EngineConfig& config, const Embedder& embedder) {
  config.validate();
  if (!qnode.needs_filter) throw Error(ErrorCode::kInvalidParams, "matching requested for an unfiltered node");
  std::vector<Embedding> queries = {embedder.embed(qnode.value)};
  if (!qnode.subquestion.empty()) queries.push_back(embedder.embed(qnode.value + " " + qnode.subquestion));

  std::vector<MatchCandidate> out;
  for (const auto& id : graph.nodes_of_type(qnode.node_type)) {
    const double sim = node_similarity(graph.node(id), queries, embedder);
    if (sim >= config.similarity_floor && sim > 0.0) out.push_back({id, sim});
  }
  std::sort(out.begin(), out.end(), by_similarity);
  if (out.size() > config.top_n) out.resize(config.top_n);
  if (out.empty()) {
    throw Error(ErrorCode::kNoCandidates, "no " + qnode.node_type + " node resembles '" + qnode.value + "'");
  }
  return out;
}

std::vector<kg::MetaHop> schema_path(const kg::Schema& schema, std::string_view from_type, std::string_view to_type) {
  for (auto t : {from_type, to_type}) {
    if (!schema.has_node_type(t)) throw Error(ErrorCode::kUnknownType, "unknown node type '" + std::string(t) + "'");
  }
  struct State {
    std::size_t dist;
    int count;  // shortest walks reaching this type, capped at 2
    kg::MetaHop via;
    std::string prev;
  };
  std::map<std::string, State, std::less<>> state;
  std::deque<std::string> queue;
  const auto relax = [&](const std::string& prev, std::size_t dist, int count, const kg::MetaHop& hop) {
    auto it = state.find(hop.to_type);
    if (it == state.end()) {
      state.emplace(hop.to_type, State{dist, std::min(count, 2), hop, prev});
      queue.push_back(hop.to_type);
    } else if (it->second.dist == dist) {
      it->second.count = std::min(2, it->second.count + count);
    }
  };
  const std::string origin(from_type);
  for (const auto& hop : schema.hops_from(origin)) relax(origin, 1, 1, hop);
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    const auto s = state.at(u);
    if (u == to_type) break;  // its count is final once it is dequeued
    for (const auto& hop : schema.hops_from(u)) relax(u, s.dist + 1, s.count, hop);
  }
  auto it = state.find(to_type);
  if (it == state.end()) {
    throw Error(ErrorCode::kNoSchemaPath,
                "no schema path from " + std::string(from_type) + " to " + std::string(to_type));
  }
  if (it->second.count > 1) {
    throw Error(ErrorCode::kAmbiguousPath, "several shortest schema paths from " + std::string(from_type) + " to " +
                                               std::string(to_type));
  }
  std::vector<kg::MetaHop> path;
  std::string cur(to_type);
  while (true) {
    const auto& s = state.at(cur);
    path.insert(path.begin(), s.via);
    if (s.dist == 1) break;
    cur = s.prev;
  }
  return path;
}

CompiledQuery compile_query(const QuestionList& qlist, const std::vector<std::vector<MatchCandidate>>& candidates,
                            const kg::Schema& schema) {
  if (qlist.nodes.empty()) throw Error(ErrorCode::kInvalidParams, "empty question list");
  if (qlist.target >= qlist.nodes.size()) throw Error(ErrorCode::kInvalidParams, "target index out of range");
  if (candidates.size() != qlist.nodes.size()) {
    throw Error(ErrorCode::kInvalidParams, "candidate lists must be indexed like the question nodes");
  }
  CompiledQuery q;
  for (std::size_t i = 0; i < qlist.nodes.size(); ++i) {
    const auto& node = qlist.nodes[i];
    if (!schema.has_node_type(node.node_type)) {
      throw Error(ErrorCode::kUnknownType, "unknown node type '" + node.node_type + "'");
    }
    PatternVar var{"n" + std::to_string(i), node.node_type, std::nullopt};
    if (node.needs_filter) {
      std::vector<std::string> ids;
      for (const auto& c : candidates[i]) ids.push_back(c.id);
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
      var.id_filter = std::move(ids);
    }
    q.pattern.push_back(std::move(var));
    if (i > 0) {
      q.joins.push_back({q.pattern[i - 1].name, schema_path(schema, qlist.nodes[i - 1].node_type, node.node_type),
                         q.pattern[i].name});
    }
  }
  q.return_var = q.pattern[qlist.target].name;

  std::ostringstream text;
  text << "MATCH (" << q.pattern[0].name << ':' << q.pattern[0].node_type << ')';
  for (std::size_t j = 0; j < q.joins.size(); ++j) {
    const auto& path = q.joins[j].path;
    for (std::size_t h = 0; h < path.size(); ++h) {
      text << "-[:" << path[h].edge_type << "]-";
      if (h + 1 < path.size()) {
        text << "(:" << path[h].to_type << ')';
      } else {
        text << '(' << q.pattern[j + 1].name << ':' << q.pattern[j + 1].node_type << ')';
      }
    }
  }
  std::vector<std::string> filters;
  for (const auto& var : q.pattern) {
    if (!var.id_filter) continue;
    std::vector<std::string> quoted;
    for (const auto& id : *var.id_filter) quoted.push_back(quote(id));
    filters.push_back(var.name + ".id IN [" + join(quoted, ", ") + "]");
  }
  if (!filters.empty()) text << "\nWHERE " << join(filters, " AND ");
  text << "\nRETURN DISTINCT " << q.return_var << ".id AS id, " << q.return_var << ".name AS name"
       << "\nORDER BY id";
  q.text = text.str();
  return q;
}

std::vector<Binding> execute_query(const CompiledQuery& query, const kg::KnowledgeGraph& graph) {
  if (query.pattern.empty()) throw Error(ErrorCode::kInvalidParams, "query has no pattern");
  if (query.joins.size() + 1 != query.pattern.size()) {
    throw Error(ErrorCode::kInvalidParams, "query joins must link consecutive pattern variables");
  }
  // Flatten the chain into slots: pattern variables interleaved with the
  // anonymous nodes of each join path.
  struct Slot {
    std::string type;
    const std::vector<std::string>* filter = nullptr;
    std::uint16_t edge_from_prev = 0;
  };
  std::vector<Slot> slots;
  std::size_t return_slot = 0;
  for (std::size_t i = 0; i < query.pattern.size(); ++i) {
    const auto& var = query.pattern[i];
    if (i > 0) {
      const auto& join = query.joins[i - 1];
      if (join.from_var != query.pattern[i - 1].name || join.to_var != var.name || join.path.empty()) {
        throw Error(ErrorCode::kInvalidParams, "join " + std::to_string(i - 1) + " does not match the pattern");
      }
      for (std::size_t h = 0; h < join.path.size(); ++h) {
        const auto& hop = join.path[h];
        auto et = graph.edge_type_index(hop.edge_type);
        if (!et) throw Error(ErrorCode::kInvalidParams, "edge type '" + hop.edge_type + "' not in graph schema");
        Slot s{hop.to_type, nullptr, *et};
        if (h + 1 == join.path.size()) {
          if (hop.to_type != var.node_type) {
            throw Error(ErrorCode::kInvalidParams, "join path does not end at " + var.node_type);
          }
          if (var.id_filter) s.filter = &*var.id_filter;
        }
        slots.push_back(std::move(s));
      }
    } else {
      slots.push_back({var.node_type, var.id_filter ? &*var.id_filter : nullptr, 0});
    }
    if (var.name == query.return_var) return_slot = slots.size() - 1;
  }

  const std::size_t n = graph.node_count();
  std::vector<std::vector<char>> alive(slots.size(), std::vector<char>(n, 0));
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (slots[s].filter) {
      for (const auto& id : *slots[s].filter) {
        auto idx = graph.index_of(id);
        if (idx && graph.at(*idx).type == slots[s].type) alive[s][*idx] = 1;
      }
    } else {
      for (const auto& id : graph.nodes_of_type(slots[s].type)) alive[s][*graph.index_of(id)] = 1;
    }
  }
  // Forward pass keeps nodes reachable from a full prefix match, backward pass
  // keeps those that also extend to a full suffix. On a chain this leaves
  // exactly the nodes taking part in some complete match.
  for (std::size_t s = 1; s < slots.size(); ++s) {
    std::vector<char> reached(n, 0);
    for (std::uint32_t u = 0; u < n; ++u) {
      if (!alive[s - 1][u]) continue;
      for (const auto& adj : graph.adjacent(u)) {
        if (adj.edge_type == slots[s].edge_from_prev && alive[s][adj.node]) reached[adj.node] = 1;
      }
    }
    alive[s] = std::move(reached);
  }
  for (std::size_t s = slots.size() - 1; s-- > 0;) {
    for (std::uint32_t u = 0; u < n; ++u) {
      if (!alive[s][u]) continue;
      bool extends = false;
      for (const auto& adj : graph.adjacent(u)) {
        if (adj.edge_type == slots[s + 1].edge_from_prev && alive[s + 1][adj.node]) {
          extends = true;
          break;
        }
      }
      if (!extends) alive[s][u] = 0;
    }
  }

  std::vector<Binding> out;
  for (std::uint32_t u = 0; u < n; ++u) {
    if (!alive[return_slot][u]) continue;
    const auto& rec = graph.at(u);
    out.push_back({rec.id, rec.type, rec.name, rec.attrs});
  }
  std::sort(out.begin(), out.end(), [](const Binding& a, const Binding& b) { return a.id < b.id; });
  return out;
}

std::vector<Passage> retrieve_passages(std::string_view question, const kg::KnowledgeGraph& graph,
                                       const EngineConfig& config, const Embedder& embedder) {
  config.validate();
  std::vector<Embedding> queries = {embedder.embed(question)};
  for (const auto& w : content_words(question)) queries.push_back(embedder.embed(w));

  std::vector<MatchCandidate> scored;
  for (const auto& rec : graph.node_records()) {
    const double sim = node_similarity(rec, queries, embedder);
    if (sim > 0.0) scored.push_back({rec.id, sim});
  }
  std::sort(scored.begin(), scored.end(), by_similarity);
  // Prefer nodes above the floor; fall back to the best weak matches.
  const auto above = std::count_if(scored.begin(), scored.end(),
                                   [&](const MatchCandidate& c) { return c.similarity >= config.similarity_floor; });
  std::size_t keep = above > 0 ? static_cast<std::size_t>(above) : scored.size();
  keep = std::min(keep, config.top_n);

  constexpr std::size_t kNeighborsPerType = 8;
  std::vector<Passage> out;
  for (std::size_t i = 0; i < keep; ++i) {
    const auto& rec = graph.node(scored[i].id);
    std::ostringstream text;
    text << rec.name << " (" << rec.type << ", " << rec.id << ").";
    if (!rec.synonyms.empty()) text << " Also known as: " << join(rec.synonyms, ", ") << '.';
    std::map<std::string, std::vector<std::string>> by_type;
    const auto idx = *graph.index_of(rec.id);
    for (const auto& adj : graph.adjacent(idx)) {
      by_type[graph.edge_type_name(adj.edge_type)].push_back(graph.at(adj.node).name);
    }
    for (auto& [edge_type, names] : by_type) {
      std::sort(names.begin(), names.end());
      names.erase(std::unique(names.begin(), names.end()), names.end());
      const auto total = names.size();
      if (total > kNeighborsPerType) names.resize(kNeighborsPerType);
      text << ' ' << edge_type << ": " << join(names, ", ");
      if (total > kNeighborsPerType) text << " and " << (total - kNeighborsPerType) << " more";
      text << '.';
    }
    out.push_back({rec.id, text.str()});
  }
  return out;
}

KgAnswer answer_with_retries(std::string_view text, const kg::KnowledgeGraph& graph, llm::Provider& provider,
                             const EngineConfig& config, const Embedder& embedder) {
  config.validate();
  if (trim(text).empty()) throw Error(ErrorCode::kInvalidParams, "empty question");
  const auto& schema = graph.schema();
  KgAnswer answer;
  std::vector<DecompositionAttempt> feedback;
  std::optional<Error> last_provider_error;
  std::size_t provider_failures = 0;

  for (std::size_t attempt = 0; attempt < config.retries; ++attempt) {
    llm::ChatMessage reply;
    ++answer.provider_calls;
    try {
      reply = provider.complete(decomposition_messages(text, schema, feedback), {}, {});
    } catch (const Error& e) {
      if (!retryable_provider_failure(e)) throw;
      answer.failures.push_back(e.what());
      feedback.push_back({"", e.what()});
      last_provider_error = e;
      ++provider_failures;
      continue;
    }
    try {
      QueryResult result;
      result.questions = parse_question_list(reply.content, schema);
      result.candidates.resize(result.questions.nodes.size());
      for (std::size_t i = 0; i < result.questions.nodes.size(); ++i) {
        if (result.questions.nodes[i].needs_filter) {
          result.candidates[i] = match_candidates(result.questions.nodes[i], graph, config, embedder);
        }
      }
      result.query = compile_query(result.questions, result.candidates, schema);
      result.bindings = execute_query(result.query, graph);
      result.retries_used = attempt;
      answer.outcome = std::move(result);
      return answer;
    } catch (const Error& e) {
      if (!pipeline_failure(e)) throw;
      answer.failures.push_back(e.what());
      feedback.push_back({reply.content, e.what()});
    }
  }
  if (provider_failures == config.retries) throw *last_provider_error;

  FallbackSummary summary;
  summary.passages = retrieve_passages(text, graph, config, embedder);
  std::string rendered;
  for (const auto& p : summary.passages) rendered += "- [" + p.source_id + "] " + p.text + "\n";
  if (rendered.empty()) rendered = "(no matching graph nodes)\n";
  const std::vector<llm::ChatMessage> msgs = {
      llm::ChatMessage::system(
          prompts::render_named("kg_fallback", {{"question", std::string(text)}, {"passages", rendered}})),
      llm::ChatMessage::user(std::string(text))};
  ++answer.provider_calls;
  summary.condensed = provider.complete(msgs, {}, {}).content;
  answer.outcome = std::move(summary);
  return answer;
}

json to_json(const QuestionList& qlist) {
  json nodes = json::array();
  for (const auto& n : qlist.nodes) {
    nodes.push_back({{"type", n.node_type},
                     {"value", n.value},
                     {"subquestion", n.subquestion},
                     {"needs_filter", n.needs_filter}});
  }
  return {{"nodes", nodes}, {"target", qlist.target}};
}

json to_json(const CompiledQuery& query) {
  json pattern = json::array();
  for (const auto& v : query.pattern) {
    json item = {{"var", v.name}, {"type", v.node_type}};
    if (v.id_filter) item["ids"] = *v.id_filter;
    pattern.push_back(std::move(item));
  }
  json joins = json::array();
  for (const auto& j : query.joins) {
    json path = json::array();
    for (const auto& h : j.path) path.push_back({{"edge_type", h.edge_type}, {"to_type", h.to_type}});
    joins.push_back({{"from", j.from_var}, {"path", path}, {"to", j.to_var}});
  }
  return {{"pattern", pattern}, {"joins", joins}, {"return", query.return_var}, {"text", query.text}};
}

json to_json(const KgAnswer& answer) {
  json out = {{"failures", answer.failures}, {"provider_calls", answer.provider_calls}};
  if (const auto* r = std::get_if<QueryResult>(&answer.outcome)) {
    json bindings = json::array();
    for (const auto& b : r->bindings) bindings.push_back({{"id", b.id}, {"type", b.type}, {"name", b.name}});
    json cands = json::array();
    for (const auto& list : r->candidates) {
      json items = json::array();
      for (const auto& c : list) items.push_back({{"id", c.id}, {"similarity", c.similarity}});
      cands.push_back(std::move(items));
    }
    out["kind"] = "query";
    out["questions"] = to_json(r->questions);
    out["candidates"] = cands;
    out["query"] = to_json(r->query);
    out["bindings"] = bindings;
    out["retries_used"] = r->retries_used;
  } else {
    const auto& f = std::get<FallbackSummary>(answer.outcome);
    json passages = json::array();
    for (const auto& p : f.passages) passages.push_back({{"source_id", p.source_id}, {"text", p.text}});
    out["kind"] = "fallback";
    out["passages"] = passages;
    out["condensed"] = f.condensed;
  }
  return out;
}

}  // namespace chatd::query
