#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "chatd/kg/graph.hpp"
#include "chatd/llm/provider.hpp"
#include "chatd/query/embed.hpp"

namespace chatd::query {

struct QuestionNode {
  std::string node_type;
  std::string value;  // surface form from the user, may be empty
  std::string subquestion;
  bool needs_filter = false;
};

/// Typed entity slots of a question, in connection order. Relations are
/// deliberately absent; compile_query derives them from the schema.
struct QuestionList {
  std::vector<QuestionNode> nodes;
  std::size_t target = 0;
};

struct MatchCandidate {
  std::string id;
  double similarity = 0.0;
};

struct EngineConfig {
  std::size_t top_n = 5;
  std::size_t retries = 3;  // R: decomposition attempts before the fallback
  double similarity_floor = 0.25;

  void validate() const;  // throws InvalidParams
};

struct PatternVar {
  std::string name;  // n0, n1, ... by question index
  std::string node_type;
  std::optional<std::vector<std::string>> id_filter;  // sorted; only on needs_filter nodes
};

/// Consecutive pattern variables joined through a schema path. Intermediate
/// hops bind anonymous nodes.
struct Join {
  std::string from_var;
  std::vector<kg::MetaHop> path;  // non-empty; last hop's to_type is to_var's type
  std::string to_var;
};

struct CompiledQuery {
  std::vector<PatternVar> pattern;
  std::vector<Join> joins;
  std::string return_var;
  std::string text;  // Cypher-dialect rendering
};

struct Binding {
  std::string id;
  std::string type;
  std::string name;
  std::map<std::string, std::string> attrs;
};

/// Parses and validates a decomposition reply. Accepts a JSON object
/// {"nodes": [{"type", "value", "subquestion", "filter", "target"}], "target": i}
/// optionally wrapped in prose or a code fence. Without an explicit target the
/// last unfiltered node answers the question (the last node if all filter).
QuestionList parse_question_list(std::string_view reply, const kg::Schema& schema);

/// One provider round trip; `feedback` holds prior failed replies and their
/// failure reasons, oldest first.
struct DecompositionAttempt {
  std::string reply;
  std::string failure;
};
std::vector<llm::ChatMessage> decomposition_messages(std::string_view text, const kg::Schema& schema,
                                                     const std::vector<DecompositionAttempt>& feedback);

/// Asks the provider for a question list. Throws MalformedDecomposition when
/// the reply fails validation; provider failures propagate.
QuestionList decompose_question(std::string_view text, const kg::Schema& schema, llm::Provider& provider);

/// Graph nodes of qnode.node_type whose name or a synonym resembles the value.
/// Similarity is the best cosine against the value alone and against
/// value + " " + subquestion. Sorted by similarity desc, then id.
std::vector<MatchCandidate> match_candidates(const QuestionNode& qnode, const kg::KnowledgeGraph& graph,
                                             const EngineConfig& config,
                                             const Embedder& embedder = default_embedder());

/// The unique shortest meta-graph path (at least one hop) from one node type
/// to another. Throws AmbiguousPath or NoSchemaPath.
std::vector<kg::MetaHop> schema_path(const kg::Schema& schema, std::string_view from_type, std::string_view to_type);

/// `candidates` is indexed like qlist.nodes; entries of unfiltered nodes are ignored.
CompiledQuery compile_query(const QuestionList& qlist, const std::vector<std::vector<MatchCandidate>>& candidates,
                            const kg::Schema& schema);

/// Distinct return-variable bindings over all pattern matches, sorted by id.
std::vector<Binding> execute_query(const CompiledQuery& query, const kg::KnowledgeGraph& graph);

struct QueryResult {
  QuestionList questions;
  std::vector<std::vector<MatchCandidate>> candidates;
  CompiledQuery query;
  std::vector<Binding> bindings;
  std::size_t retries_used = 0;
};

struct Passage {
  std::string source_id;
  std::string text;
};

struct FallbackSummary {
  std::vector<Passage> passages;
  std::string condensed;
};

struct KgAnswer {
  std::variant<QueryResult, FallbackSummary> outcome;
  std::vector<std::string> failures;  // one reason per failed attempt
  std::size_t provider_calls = 0;

  bool used_fallback() const { return std::holds_alternative<FallbackSummary>(outcome); }
};

/// Top-scoring nodes of any type for a free-text question, rendered with
/// their neighborhood. Used by the fallback path.
std::vector<Passage> retrieve_passages(std::string_view question, const kg::KnowledgeGraph& graph,
                                       const EngineConfig& config,
                                       const Embedder& embedder = default_embedder());

/// decompose -> match -> compile -> execute with up to config.retries
/// attempts; each failure is fed back to the provider. When every attempt
/// fails, answers from retrieved graph passages instead. A provider error is
/// rethrown when every attempt failed at the provider.
KgAnswer answer_with_retries(std::string_view text, const kg::KnowledgeGraph& graph, llm::Provider& provider,
                             const EngineConfig& config = {}, const Embedder& embedder = default_embedder());

nlohmann::json to_json(const QuestionList& qlist);
nlohmann::json to_json(const CompiledQuery& query);
nlohmann::json to_json(const KgAnswer& answer);

}  // namespace chatd::query
