#include <doctest.h>

#include <random>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "../support/tempdir.hpp"
#include "chatd/kg/graph.hpp"

using chatd::Error;
using chatd::ErrorCode;
using chatd::kg::EdgeRecord;
using chatd::kg::KnowledgeGraph;
using chatd::kg::NodeRecord;
using chatd::kg::Schema;
using nlohmann::json;

namespace {

Schema bio_schema() { return Schema::from_json(oracle::biomedical_schema_json()); }

NodeRecord node(const std::string& id, const std::string& type) { return {id, type, id, {}, {}}; }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

// Small mixed graph: g1 encodes p1 and p2, p1-p2 and p1-p3 ppi, d1 targets p1.
KnowledgeGraph mixed() {
  return KnowledgeGraph::from_records(
      bio_schema(),
      {node("g1", "gene"), node("g2", "gene"), node("p1", "protein"), node("p2", "protein"), node("p3", "protein"),
       node("d1", "drug")},
      {{"g1", "p2", "encodes"}, {"g1", "p1", "encodes"}, {"p1", "p2", "ppi"}, {"p3", "p1", "ppi"},
       {"d1", "p1", "targets"}});
}

}  // namespace

TEST_CASE("loading fixture files preserves node and edge counts") {
  fixtures::TempDir dir;
  dir.write("schema.json", oracle::biomedical_schema_json().dump());
  std::string nodes;
  for (const auto& [id, type] : std::vector<std::pair<std::string, std::string>>{
           {"entrez.1", "gene"}, {"entrez.2", "gene"}, {"uniprot.A", "protein"}, {"uniprot.B", "protein"}, {"drugbank.D", "drug"}}) {
    nodes += json{{"id", id}, {"type", type}, {"name", id}}.dump() + "\n";
  }
  dir.write("nodes.jsonl", nodes);
  dir.write("edges.jsonl",
            "{\"source\":\"entrez.1\",\"target\":\"uniprot.A\",\"type\":\"encodes\"}\n"
            "{\"source\":\"entrez.2\",\"target\":\"uniprot.B\",\"type\":\"encodes\"}\n"
            "{\"source\":\"uniprot.A\",\"target\":\"uniprot.B\",\"type\":\"ppi\"}\n"
            "{\"source\":\"drugbank.D\",\"target\":\"uniprot.A\",\"type\":\"targets\"}\n");
  const auto g = KnowledgeGraph::load(dir.path() / "nodes.jsonl", dir.path() / "edges.jsonl",
                                      Schema::load(dir.path() / "schema.json"));
  const auto stats = g.stats();
  CHECK(stats.nodes == 5);
  CHECK(stats.edges == 4);
  CHECK(stats.nodes_by_type.at("gene") == 2);
  CHECK(stats.edges_by_type.at("ppi") == 1);
}

TEST_CASE("an edge to an absent id is a dangling edge naming its line") {
  fixtures::TempDir dir;
  dir.write("nodes.jsonl", "{\"id\":\"entrez.1\",\"type\":\"gene\"}\n{\"id\":\"uniprot.A\",\"type\":\"protein\"}\n");
  dir.write("edges.jsonl",
            "{\"source\":\"entrez.1\",\"target\":\"uniprot.A\",\"type\":\"encodes\"}\n"
            "{\"source\":\"entrez.999\",\"target\":\"uniprot.A\",\"type\":\"encodes\"}\n");
  try {
    KnowledgeGraph::load(dir.path() / "nodes.jsonl", dir.path() / "edges.jsonl", bio_schema());
    FAIL("expected DanglingEdge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDanglingEdge);
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
    CHECK(std::string(e.what()).find("entrez.999") != std::string::npos);
  }
}

TEST_CASE("identical edge lines collapse into one edge") {
  const auto g = KnowledgeGraph::from_records(bio_schema(), {node("a", "protein"), node("b", "protein")},
                                              {{"a", "b", "ppi"}, {"a", "b", "ppi"}, {"b", "a", "ppi"}});
  CHECK(g.edge_count() == 1);
}

TEST_CASE("random edge lists dedup to the set of canonical triples") {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 20; ++round) {
    const auto base = oracle::random_gnp(12, 0.3, rng);
    std::vector<NodeRecord> nodes;
    for (const auto& id : base.ids) nodes.push_back(node(id, "protein"));
    std::vector<EdgeRecord> edges;
    std::set<std::pair<std::string, std::string>> expected;
    for (auto [u, v] : base.edges) {
      const int copies = std::uniform_int_distribution<int>(1, 3)(rng);
      for (int c = 0; c < copies; ++c) {
        if (c % 2) edges.push_back({base.ids[v], base.ids[u], "ppi"});
        else edges.push_back({base.ids[u], base.ids[v], "ppi"});
      }
      expected.insert(std::minmax(base.ids[u], base.ids[v]));
    }
    const auto g = KnowledgeGraph::from_records(Schema::from_json(oracle::ppi_schema_json()), nodes, edges);
    std::set<std::pair<std::string, std::string>> got;
    for (const auto& e : g.edges()) got.insert({e.source, e.target});
    CHECK(got == expected);
  }
}

TEST_CASE("schema violations and malformed lines are rejected") {
  CHECK(code_of([] { KnowledgeGraph::from_records(bio_schema(), {node("x", "planet")}, {}); }) ==
        ErrorCode::kSchemaViolation);
  CHECK(code_of([] {
          KnowledgeGraph::from_records(bio_schema(), {node("g", "gene"), node("d", "drug")}, {{"g", "d", "encodes"}});
        }) == ErrorCode::kSchemaViolation);
  fixtures::TempDir dir;
  dir.write("nodes.jsonl", "{\"id\":\"a\",\"type\":\"gene\"}\nnot json\n");
  dir.write("edges.jsonl", "");
  CHECK(code_of([&] { KnowledgeGraph::load(dir.path() / "nodes.jsonl", dir.path() / "edges.jsonl", bio_schema()); }) ==
        ErrorCode::kParseError);
  CHECK(code_of([] { Schema::from_json(json{{"node_types", {"a", "a"}}, {"edge_types", json::array()}}); }) ==
        ErrorCode::kSchemaViolation);
}

TEST_CASE("translate follows the encoding edge in both directions") {
  const auto g = mixed();
  CHECK(g.translate({"g1"}, "protein").at("g1") == std::vector<std::string>{"p1", "p2"});
  CHECK(g.translate({"g2"}, "protein").at("g2").empty());
  CHECK(g.translate({"p2"}, "gene").at("p2") == std::vector<std::string>{"g1"});
  CHECK(g.translate({"p3"}, "protein").at("p3") == std::vector<std::string>{"p3"});
  CHECK(code_of([&] { g.translate({"nope"}, "protein"); }) == ErrorCode::kUnknownNode);
  CHECK(code_of([&] { g.translate({"g1"}, "planet"); }) == ErrorCode::kUnknownType);
}

TEST_CASE("neighbors are sorted, deduplicated and filterable by edge type") {
  const auto star = KnowledgeGraph::from_records(
      bio_schema(), {node("c", "protein"), node("l3", "protein"), node("l1", "protein"), node("l2", "protein"), node("i", "protein")},
      {{"c", "l3", "ppi"}, {"l1", "c", "ppi"}, {"c", "l2", "ppi"}});
  CHECK(star.neighbors("c") == std::vector<std::string>{"l1", "l2", "l3"});
  CHECK(star.neighbors("i").empty());
  const auto g = mixed();
  CHECK(g.neighbors("p1") == std::vector<std::string>{"d1", "g1", "p2", "p3"});
  CHECK(g.neighbors("p1", std::string("ppi")) == std::vector<std::string>{"p2", "p3"});
  CHECK(code_of([&] { g.neighbors("zz"); }) == ErrorCode::kUnknownNode);
}

TEST_CASE("neighbor relation is symmetric on the sample graph") {
  const auto& g = fixtures::sample()->graph;
  for (const auto& rec : g.node_records()) {
    for (const auto& nb : g.neighbors(rec.id)) {
      const auto back = g.neighbors(nb);
      REQUIRE(std::binary_search(back.begin(), back.end(), rec.id));
    }
  }
}

TEST_CASE("induced subgraphs keep exactly the internal edges") {
  const auto g = mixed();
  std::vector<std::string> all;
  for (const auto& r : g.node_records()) all.push_back(r.id);
  const auto same = g.induced_subgraph(all);
  CHECK(same.edges() == g.edges());
  CHECK(same.node_count() == g.node_count());

  const auto pair = g.induced_subgraph({"g2", "p3"});
  CHECK(pair.node_count() == 2);
  CHECK(pair.edge_count() == 0);

  const auto tri = KnowledgeGraph::from_records(bio_schema(), {node("a", "protein"), node("b", "protein"), node("c", "protein")},
                                                {{"a", "b", "ppi"}, {"b", "c", "ppi"}, {"a", "c", "ppi"}});
  const auto sub = tri.induced_subgraph({"a", "c"});
  CHECK(sub.node_count() == 2);
  REQUIRE(sub.edge_count() == 1);
  CHECK(sub.edges()[0] == EdgeRecord{"a", "c", "ppi"});
  CHECK(code_of([&] { tri.induced_subgraph({"a", "q"}); }) == ErrorCode::kUnknownNode);
}

TEST_CASE("every sample edge has resolvable endpoints of the declared types") {
  const auto& g = fixtures::sample()->graph;
  CHECK(g.node_count() == 639);
  CHECK(g.edge_count() == 987);
  for (const auto& e : g.edges()) {
    const auto* decl = g.schema().find_edge_type(e.type);
    REQUIRE(decl != nullptr);
    CHECK(g.node(e.source).type == decl->source_type);
    CHECK(g.node(e.target).type == decl->target_type);
  }
}

TEST_CASE("schema meta-graph hops come in both directions") {
  const auto s = bio_schema();
  std::set<std::pair<std::string, std::string>> hops;
  for (const auto& h : s.hops_from("protein")) hops.insert({h.edge_type, h.to_type});
  CHECK(hops == std::set<std::pair<std::string, std::string>>{
                    {"encodes", "gene"}, {"in_pathway", "pathway"}, {"ppi", "protein"}, {"targets", "drug"}});
  CHECK(s.admits("protein", "encodes", "gene"));
  CHECK_FALSE(s.admits("drug", "encodes", "gene"));
}
