#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "chatd/llm/scripted.hpp"
#include "chatd/query/embed.hpp"
#include "chatd/query/engine.hpp"

using namespace chatd;
using namespace chatd::query;
using nlohmann::json;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

json reply(const std::string& content) { return {{"response", {{"content", content}}}}; }

llm::ScriptedProvider provider_of(const std::vector<json>& exchanges) {
  return llm::ScriptedProvider(llm::parse_script(json{{"exchanges", exchanges}}));
}

const std::string kAlzDecomposition =
    R"({"nodes": [{"type": "disorder", "value": "alzheimer", "subquestion": "which disorder", "filter": true},
                  {"type": "gene", "value": "", "subquestion": "genes related to it", "filter": false}],
        "target": 1})";

std::set<std::string> ids_of(const std::vector<Binding>& bindings) {
  std::set<std::string> out;
  for (const auto& b : bindings) out.insert(b.id);
  return out;
}

// Slots for the oracle, built from the question list and the oracle's own
// schema paths.
std::vector<oracle::Slot> oracle_slots(const QuestionList& q, const std::vector<std::vector<MatchCandidate>>& cands,
                                       const json& schema, std::size_t& return_slot) {
  std::vector<oracle::Slot> slots;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    std::optional<std::set<std::string>> filter;
    if (q.nodes[i].needs_filter) {
      filter.emplace();
      for (const auto& c : cands[i]) filter->insert(c.id);
    }
    if (i == 0) {
      slots.push_back({q.nodes[0].node_type, filter, ""});
    } else {
      const auto paths = oracle::shortest_meta_paths(schema, q.nodes[i - 1].node_type, q.nodes[i].node_type);
      REQUIRE(paths.size() == 1);
      const auto& path = paths[0];
      for (std::size_t h = 0; h < path.size(); ++h) {
        const bool last = h + 1 == path.size();
        slots.push_back({path[h].second, last ? filter : std::nullopt, path[h].first});
      }
    }
    if (i == q.target) return_slot = slots.size() - 1;
  }
  return slots;
}

}  // namespace

TEST_CASE("alzheimer gene question decomposes into a filtered disorder and a gene target") {
  const auto& g = fixtures::sample()->graph;
  auto p = provider_of({reply("Here you go:\n```json\n" + kAlzDecomposition + "\n```")});
  const auto q = decompose_question("Which genes are related to alzheimer?", g.schema(), p);
  REQUIRE(q.nodes.size() == 2);
  CHECK(q.nodes[0].node_type == "disorder");
  CHECK(q.nodes[0].value == "alzheimer");
  CHECK(q.nodes[0].needs_filter);
  CHECK(q.nodes[1].node_type == "gene");
  CHECK_FALSE(q.nodes[1].needs_filter);
  CHECK(q.target == 1);
}

TEST_CASE("decomposition with an unknown type is malformed") {
  const auto& g = fixtures::sample()->graph;
  auto p = provider_of({reply(R"({"nodes": [{"type": "planet", "value": "mars", "filter": true}]})")});
  CHECK(code_of([&] { decompose_question("Which planets?", g.schema(), p); }) == ErrorCode::kMalformedDecomposition);
  CHECK(code_of([&] { parse_question_list("no json here", g.schema()); }) == ErrorCode::kMalformedDecomposition);
  CHECK(code_of([&] { parse_question_list(R"({"nodes": []})", g.schema()); }) == ErrorCode::kMalformedDecomposition);
}

TEST_CASE("drug question parses with the last unfiltered node as target") {
  const auto& g = fixtures::sample()->graph;
  const auto q = parse_question_list(
      R"({"nodes": [{"type": "gene", "value": "APP", "filter": true}, {"type": "drug", "value": "", "filter": false}]})",
      g.schema());
  REQUIRE(q.nodes.size() == 2);
  CHECK(q.nodes[0].node_type == "gene");
  CHECK(q.nodes[0].value == "APP");
  CHECK(q.nodes[1].node_type == "drug");
  CHECK(q.target == 1);
}

TEST_CASE("trigram embeddings") {
  const auto e = embed_text("abc");
  REQUIRE(e.size() == 1);
  CHECK(e[0].first == "abc");
  CHECK(norm(e) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(embed_text("ab").empty());
  for (const std::string s : {"alzheimer", "Parkinson disease", "aaaaaa"}) {
    CHECK(dot(embed_text(s), embed_text(s)) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(cosine(embed_text("alzheimer"), embed_text("Alzheimer disease")) >
        cosine(embed_text("alzheimer"), embed_text("asthma")));
  // Hand count: "alzheimer" has 7 distinct trigrams, all inside "alzheimer disease" (15 trigrams).
  CHECK(cosine(embed_text("alzheimer"), embed_text("alzheimer disease")) ==
        doctest::Approx(7.0 / std::sqrt(7.0 * 15.0)).epsilon(1e-12));
}

TEST_CASE("candidate matching ranks by similarity") {
  const auto& g = fixtures::sample()->graph;
  EngineConfig config;
  const auto exact = match_candidates({"gene", "APOE", "", true}, g, config);
  REQUIRE_FALSE(exact.empty());
  CHECK(g.node(exact[0].id).name == "APOE");
  CHECK(exact[0].similarity == doctest::Approx(1.0));

  const auto alz = match_candidates({"disorder", "alzheimer", "", true}, g, config);
  REQUIRE_FALSE(alz.empty());
  CHECK(alz[0].id == "mondo.0004975");
  for (std::size_t i = 1; i < alz.size(); ++i) CHECK(alz[i - 1].similarity >= alz[i].similarity);

  CHECK(code_of([&] { match_candidates({"disorder", "zzzz", "", true}, g, config); }) == ErrorCode::kNoCandidates);
}

TEST_CASE("compile joins consecutive nodes over the unique schema path") {
  const auto& g = fixtures::sample()->graph;
  QuestionList q{{{"disorder", "alzheimer", "", true}, {"gene", "", "", false}}, 1};
  const std::vector<std::vector<MatchCandidate>> cands = {{{"mondo.0004975", 1.0}}, {}};
  const auto c = compile_query(q, cands, g.schema());
  REQUIRE(c.joins.size() == 1);
  REQUIRE(c.joins[0].path.size() == 1);
  CHECK(c.joins[0].path[0].edge_type == "associated_with");
  CHECK(c.return_var == "n1");
  CHECK(c.text ==
        "MATCH (n0:disorder)-[:associated_with]-(n1:gene)\n"
        "WHERE n0.id IN ['mondo.0004975']\n"
        "RETURN DISTINCT n1.id AS id, n1.name AS name\n"
        "ORDER BY id");
  // Same input, same bytes.
  CHECK(compile_query(q, cands, g.schema()).text == c.text);

  const auto single = compile_query({{{"drug", "", "", false}}, 0}, {{}}, g.schema());
  CHECK(single.joins.empty());
  CHECK(execute_query(single, g).size() == g.nodes_of_type("drug").size());
}

TEST_CASE("equal-length schema paths are ambiguous and disconnected types have none") {
  const auto ambiguous = kg::Schema::from_json(json{
      {"node_types", {"a", "b", "c", "d"}},
      {"edge_types",
       {{{"name", "ab"}, {"source", "a"}, {"target", "b"}}, {{"name", "bd"}, {"source", "b"}, {"target", "d"}},
        {{"name", "ac"}, {"source", "a"}, {"target", "c"}}, {{"name", "cd"}, {"source", "c"}, {"target", "d"}}}}});
  CHECK(code_of([&] { schema_path(ambiguous, "a", "d"); }) == ErrorCode::kAmbiguousPath);
  CHECK(schema_path(ambiguous, "a", "b").size() == 1);
  const auto split = kg::Schema::from_json(
      json{{"node_types", {"a", "b", "z"}}, {"edge_types", {{{"name", "ab"}, {"source", "a"}, {"target", "b"}}}}});
  CHECK(code_of([&] { schema_path(split, "a", "z"); }) == ErrorCode::kNoSchemaPath);
}

TEST_CASE("alzheimer genes are exactly the associated genes") {
  const auto& g = fixtures::sample()->graph;
  QuestionList q{{{"disorder", "alzheimer", "", true}, {"gene", "", "", false}}, 1};
  const auto c = compile_query(q, {{{"mondo.0004975", 1.0}}, {}}, g.schema());
  const auto got = ids_of(execute_query(c, g));
  const auto want = g.neighbors("mondo.0004975", std::string("associated_with"));
  CHECK(got == std::set<std::string>(want.begin(), want.end()));
  CHECK_FALSE(got.empty());
}

TEST_CASE("an empty filter set yields no bindings") {
  const auto& g = fixtures::sample()->graph;
  QuestionList q{{{"disorder", "x", "", true}, {"gene", "", "", false}}, 1};
  const auto c = compile_query(q, {{}, {}}, g.schema());
  CHECK(execute_query(c, g).empty());
}

TEST_CASE("execution equals walk enumeration on sample queries") {
  const auto& g = fixtures::sample()->graph;
  const auto schema = json::parse(g.schema().to_json().dump());
  struct Case {
    QuestionList q;
    std::vector<std::vector<MatchCandidate>> cands;
  };
  const std::vector<Case> cases = {
      {{{{"gene", "APP", "", true}, {"drug", "", "", false}}, 1}, {{{"entrez.351", 1.0}}, {}}},
      {{{{"disorder", "", "", true}, {"gene", "", "", false}, {"pathway", "", "", false}}, 2},
       {{{"mondo.0004975", 1.0}, {"mondo.0005180", 0.5}}, {}, {}}},
      {{{{"drug", "", "", true}, {"protein", "", "", false}}, 1}, {{{"drugbank.DB01254", 1.0}}, {}}},
      {{{{"pathway", "", "", true}, {"protein", "", "", false}, {"drug", "", "", false}}, 1},
       {{{"kegg.hsa05010", 1.0}}, {}, {}}},
  };
  for (const auto& c : cases) {
    const auto compiled = compile_query(c.q, c.cands, g.schema());
    std::size_t ret = 0;
    const auto slots = oracle_slots(c.q, c.cands, schema, ret);
    CHECK(ids_of(execute_query(compiled, g)) == oracle::enumerate_chain(g, slots, ret));
  }
}

TEST_CASE("shrinking a filter never enlarges the result") {
  const auto& g = fixtures::sample()->graph;
  QuestionList q{{{"disorder", "", "", true}, {"gene", "", "", false}}, 1};
  const auto wide = execute_query(
      compile_query(q, {{{"mondo.0004975", 1.0}, {"mondo.0005180", 0.5}}, {}}, g.schema()), g);
  const auto narrow = execute_query(compile_query(q, {{{"mondo.0005180", 0.5}}, {}}, g.schema()), g);
  const auto w = ids_of(wide);
  for (const auto& id : ids_of(narrow)) CHECK(w.count(id) == 1);
}

TEST_CASE("execution equals walk enumeration on random graphs") {
  std::mt19937_64 rng(99);
  const auto schema = oracle::biomedical_schema_json();
  const std::vector<std::string> types = {"gene", "protein", "drug", "disorder", "pathway"};
  int checked = 0;
  while (checked < 40) {
    const auto g = oracle::random_typed_graph(5, 0.3, rng);
    const int len = std::uniform_int_distribution<int>(1, 3)(rng);
    QuestionList q;
    std::vector<std::vector<MatchCandidate>> cands;
    for (int i = 0; i < len; ++i) {
      const auto& type = types[std::uniform_int_distribution<std::size_t>(0, types.size() - 1)(rng)];
      const bool filter = std::bernoulli_distribution(0.5)(rng);
      q.nodes.push_back({type, "", "", filter});
      std::vector<MatchCandidate> c;
      if (filter) {
        for (const auto& id : g.nodes_of_type(type)) {
          if (std::bernoulli_distribution(0.5)(rng)) c.push_back({id, 1.0});
        }
      }
      cands.push_back(c);
    }
    q.target = std::uniform_int_distribution<std::size_t>(0, q.nodes.size() - 1)(rng);
    CompiledQuery compiled;
    try {
      compiled = compile_query(q, cands, g.schema());
    } catch (const Error& e) {
      // The oracle must agree that the path is not unique.
      CHECK(e.code() == ErrorCode::kAmbiguousPath);
      continue;
    }
    std::size_t ret = 0;
    const auto slots = oracle_slots(q, cands, schema, ret);
    CHECK(ids_of(execute_query(compiled, g)) == oracle::enumerate_chain(g, slots, ret));
    ++checked;
  }
}

TEST_CASE("first-attempt success reports zero retries") {
  const auto& g = fixtures::sample()->graph;
  auto p = provider_of({reply(kAlzDecomposition)});
  const auto a = answer_with_retries("Which genes are related to alzheimer?", g, p);
  REQUIRE_FALSE(a.used_fallback());
  const auto& r = std::get<QueryResult>(a.outcome);
  CHECK(r.retries_used == 0);
  // Genes associated with any matched disorder.
  std::set<std::string> want;
  for (const auto& c : r.candidates[0]) {
    for (const auto& id : g.neighbors(c.id, std::string("associated_with"))) want.insert(id);
  }
  CHECK(ids_of(r.bindings) == want);
  CHECK(a.provider_calls == 1);
}

TEST_CASE("a failed first attempt is fed back and the second succeeds") {
  const auto& g = fixtures::sample()->graph;
  auto p = provider_of({reply(R"({"nodes": [{"type": "planet"}]})"), reply(kAlzDecomposition)});
  const auto a = answer_with_retries("Which genes are related to alzheimer?", g, p);
  REQUIRE_FALSE(a.used_fallback());
  CHECK(std::get<QueryResult>(a.outcome).retries_used == 1);
  CHECK(a.failures.size() == 1);
  // The second request carries the first failure.
  const auto captured = p.captured();
  REQUIRE(captured.size() == 2);
  std::string second;
  for (const auto& m : captured[1]) second += m.content;
  CHECK(second.find("planet") != std::string::npos);
}

TEST_CASE("three failed attempts fall back to graph passages") {
  const auto& g = fixtures::sample()->graph;
  const auto bad = reply("I cannot produce JSON");
  auto p = provider_of({bad, bad, bad, reply("Alzheimer disease is associated with APOE.")});
  const auto a = answer_with_retries("Which genes are related to alzheimer?", g, p);
  REQUIRE(a.used_fallback());
  const auto& f = std::get<FallbackSummary>(a.outcome);
  CHECK_FALSE(f.passages.empty());
  for (const auto& passage : f.passages) CHECK(g.contains(passage.source_id));
  CHECK(f.condensed == "Alzheimer disease is associated with APOE.");
  CHECK(a.failures.size() == 3);
  CHECK(a.provider_calls == 4);
}

TEST_CASE("provider failure on every attempt surfaces") {
  const auto& g = fixtures::sample()->graph;
  const json down = {{"fail", "ProviderUnreachable"}};
  auto p = provider_of({down, down, down});
  CHECK(code_of([&] { answer_with_retries("Which genes?", g, p); }) == ErrorCode::kProviderUnreachable);
}

TEST_CASE("engine configuration is validated") {
  EngineConfig c;
  c.retries = 0;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kInvalidParams);
  c = {};
  c.similarity_floor = 1.5;
  CHECK(code_of([&] { c.validate(); }) == ErrorCode::kInvalidParams);
}
