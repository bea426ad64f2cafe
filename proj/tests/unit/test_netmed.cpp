#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "chatd/agents/handlers.hpp"
#include "chatd/netmed/algorithms.hpp"
#include "chatd/netmed/hypergeometric.hpp"

using namespace chatd;
using namespace chatd::netmed;
using kg::KnowledgeGraph;
using kg::NodeRecord;

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

oracle::SimpleGraph named(std::vector<std::string> ids, std::vector<std::pair<int, int>> edges) {
  return {std::move(ids), std::move(edges)};
}

// Proteins p*, drugs d*, with ppi and targets edges.
KnowledgeGraph drug_graph(const std::vector<std::string>& proteins, const std::vector<std::string>& drugs,
                          const std::vector<kg::EdgeRecord>& edges) {
  std::vector<NodeRecord> nodes;
  for (const auto& p : proteins) nodes.push_back({p, "protein", p, {}, {}});
  for (const auto& d : drugs) nodes.push_back({d, "drug", d, {}, {}});
  return KnowledgeGraph::from_records(kg::Schema::from_json(oracle::biomedical_schema_json()), nodes, edges);
}

}  // namespace

TEST_CASE("hypergeometric tail matches the worked values") {
  CHECK(hypergeometric_tail(0, 3, 2, 7) == 1.0);
  CHECK(hypergeometric_tail(1, 2, 1, 5) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(hypergeometric_tail(2, 2, 2, 4) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("hypergeometric tail agrees with exact sums on a grid") {
  for (std::int64_t n = 1; n <= 30; ++n) {
    for (std::int64_t s = 0; s <= n; s += 3) {
      for (std::int64_t d = 0; d <= n; d += 2) {
        for (std::int64_t k = 0; k <= std::min(s, d); ++k) {
          const double want = oracle::hypergeom_tail(k, s, d, n);
          const double got = hypergeometric_tail(k, s, d, n);
          REQUIRE(std::abs(got - want) <= 1e-10 * want);
        }
      }
    }
  }
}

TEST_CASE("hypergeometric tail rejects arguments outside its domain") {
  CHECK(code_of([] { hypergeometric_tail(3, 2, 5, 10); }) == ErrorCode::kDomainError);
  CHECK(code_of([] { hypergeometric_tail(-1, 2, 5, 10); }) == ErrorCode::kDomainError);
  CHECK(code_of([] { hypergeometric_tail(0, 11, 5, 10); }) == ErrorCode::kDomainError);
}

TEST_CASE("hypergeometric tail stays finite on large populations") {
  const double p = hypergeometric_tail(6, 6, 40, 20000);
  CHECK(std::isfinite(p));
  CHECK(p > 0.0);
  CHECK(p < 1e-15);
}

TEST_CASE("diamond with zero additions returns the seeds") {
  const auto g = named({"a", "b", "c"}, {{0, 1}, {1, 2}}).build();
  const auto m = diamond_expand(g, SeedSet{"a"}, {0, "ppi"});
  CHECK(m.added.empty());
  CHECK(m.members() == std::vector<std::string>{"a"});
  CHECK_FALSE(m.exhausted);
}

TEST_CASE("diamond picks the node touching both seeds first") {
  // s1, s2 seeds; x touches both; y1..y3 touch one seed each plus filler.
  const auto g = named({"s1", "s2", "x", "y1", "y2", "y3", "f1", "f2"},
                       {{0, 2}, {1, 2}, {0, 3}, {1, 4}, {0, 5}, {3, 6}, {4, 7}, {6, 7}})
                     .build();
  const auto m = diamond_expand(g, SeedSet{"s1", "s2"}, {1, "ppi"});
  REQUIRE(m.added.size() == 1);
  CHECK(m.added[0].id == "x");
  CHECK(m.added[0].links == 2);
}

TEST_CASE("diamond stops early when the seed component is exhausted") {
  const auto g = named({"a", "b", "c", "d", "e", "f"}, {{0, 1}, {2, 3}, {3, 4}, {4, 5}}).build();
  const auto m = diamond_expand(g, SeedSet{"a"}, {3, "ppi"});
  CHECK(m.exhausted);
  REQUIRE(m.added.size() == 1);
  CHECK(m.added[0].id == "b");
}

TEST_CASE("diamond errors") {
  const auto g = named({"a", "b"}, {{0, 1}}).build();
  CHECK(code_of([&] { diamond_expand(g, SeedSet{}, {}); }) == ErrorCode::kEmptySeeds);
  CHECK(code_of([&] { diamond_expand(g, SeedSet{"zz"}, {1, "ppi"}); }) == ErrorCode::kSeedNotInGraph);
  CHECK(code_of([&] { diamond_expand(g, SeedSet{"a"}, {5, "ppi"}); }) == ErrorCode::kInvalidParams);
  CHECK(code_of([&] { diamond_expand(g, SeedSet{"a"}, {1, "nope"}); }) == ErrorCode::kInvalidParams);
}

TEST_CASE("diamond matches the brute-force oracle on random graphs") {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 30; ++round) {
    const int n = std::uniform_int_distribution<int>(8, 30)(rng);
    const auto sg = oracle::random_connected(n, 0.1, rng);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::vector<int> seeds(order.begin(), order.begin() + 2);
    const auto want = oracle::diamond(sg, seeds, 6);
    const auto got = diamond_expand(sg.build(), SeedSet{sg.ids[seeds[0]], sg.ids[seeds[1]]}, {6, "ppi"});
    REQUIRE(got.added.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got.added[i].id == want[i].id);
      CHECK(got.added[i].links == want[i].k);
      CHECK(got.added[i].iteration == i + 1);
    }
  }
}

TEST_CASE("diamond is deterministic on the sample graph") {
  const auto& g = fixtures::sample()->graph;
  const auto seeds = agents::resolve_seeds(g, {"CD2AP", "ABI3", "BACE1", "ARC", "TREM2", "MS4A4A"});
  const auto a = diamond_expand(g, SeedSet(seeds), {10, "ppi"});
  const auto b = diamond_expand(g, SeedSet(seeds), {10, "ppi"});
  REQUIRE(a.added.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(a.added[i].id == b.added[i].id);
    CHECK(a.added[i].p_value == b.added[i].p_value);
  }
  CHECK(a.added[0].id == "uniprot.SH3BP1_HUMAN");
  CHECK(a.added[9].id == "uniprot.HCK_HUMAN");
}

TEST_CASE("trustrank on a single seeded node keeps all mass") {
  const auto g = named({"a"}, {}).build();
  const auto r = trustrank(g, SeedSet{"a"});
  CHECK(r.scores.at("a") == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.converged);
}

TEST_CASE("trustrank on a path matches the dense oracle") {
  const auto sg = named({"a", "b", "c"}, {{0, 1}, {1, 2}});
  const auto r = trustrank(sg.build(), SeedSet{"a"});
  const auto want = oracle::trustrank(sg, {0}, 0.85);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(r.scores.at(sg.ids[i]) - want[i]) < 1e-8);
}

TEST_CASE("trustrank leaves unreachable nodes at zero and sums to one") {
  const auto sg = named({"a", "b", "z1", "z2", "iso"}, {{0, 1}, {2, 3}});
  const auto r = trustrank(sg.build(), SeedSet{"a"});
  CHECK(r.scores.at("z1") == 0.0);
  CHECK(r.scores.at("z2") == 0.0);
  CHECK(r.scores.at("iso") == 0.0);
  double total = 0.0;
  for (const auto& [_, s] : r.scores) total += s;
  CHECK(std::abs(total - 1.0) < 1e-8);
}

TEST_CASE("trustrank parameter validation and non-convergence flag") {
  const auto g = named({"a", "b"}, {{0, 1}}).build();
  TrustRankParams bad;
  bad.damping = 1.0;
  CHECK(code_of([&] { trustrank(g, SeedSet{"a"}, bad); }) == ErrorCode::kInvalidParams);
  CHECK(code_of([&] { trustrank(g, SeedSet{}); }) == ErrorCode::kEmptySeeds);
  TrustRankParams short_run;
  short_run.max_iter = 1;
  const auto r = trustrank(g, SeedSet{"a"}, short_run);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 1);
}

TEST_CASE("closeness worked examples") {
  const auto path = named({"a", "b", "c"}, {{0, 1}, {1, 2}}).build();
  CHECK(closeness_scores(path, {"b"}, SeedSet{"a", "c"}).at("b") == 2.0);

  const auto split = named({"a", "b", "z"}, {{0, 1}}).build();
  CHECK(closeness_scores(split, {"z"}, SeedSet{"a", "b"}).at("z") == 0.0);

  const auto star = named({"c", "l1", "l2", "l3", "l4"}, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}).build();
  const auto s = closeness_scores(star, {"c", "l1"}, SeedSet{"l2", "l3", "l4"});
  CHECK(s.at("c") > s.at("l1"));

  // A seed candidate scores by its distances to the other seeds.
  CHECK(closeness_scores(path, {"a"}, SeedSet{"a", "c"}).at("a") == 0.5);
}

TEST_CASE("closeness equals the all-pairs oracle on random graphs") {
  std::mt19937_64 rng(5);
  for (int round = 0; round < 10; ++round) {
    const auto sg = oracle::random_gnp(40, 0.06, rng);
    const auto g = sg.build();
    const auto dist = oracle::all_pairs(sg);
    const std::vector<int> seeds = {3, 17, 29};
    std::vector<std::string> cands(sg.ids.begin(), sg.ids.end());
    const auto got = closeness_scores(g, cands, SeedSet{sg.ids[3], sg.ids[17], sg.ids[29]});
    ClosenessParams whole;
    whole.mode = ClosenessMode::kWholeGraph;
    const auto got_whole = closeness_scores(g, cands, SeedSet{sg.ids[3]}, whole);
    for (int c = 0; c < 40; ++c) {
      CHECK(got.at(sg.ids[c]) == oracle::closeness(dist, c, seeds));
      // Node index order in the graph follows the record order given to it.
      CHECK(got_whole.at(sg.ids[c]) == oracle::harmonic(dist, c));
    }
  }
}

TEST_CASE("rank_drugs puts the only targeting drug first") {
  const auto g = drug_graph({"p1", "p2"}, {"d1", "d2"}, {{"p1", "p2", "ppi"}, {"d1", "p1", "targets"}});
  const auto r = rank_drugs(g, SeedSet{"p1"});
  REQUIRE_FALSE(r.entries.empty());
  CHECK(r.entries[0].id == "d1");
  CHECK(r.entries[0].score > 0.0);
  CHECK(r.entries.size() == 1);  // d2 is isolated, so its score is zero
}

TEST_CASE("rank_drugs prefers the drug hitting more module proteins") {
  // Symmetric layout: each drug also targets one off-module protein so the
  // drug degrees match.
  const auto g = drug_graph({"m1", "m2", "o1", "o2", "o3"}, {"dA", "dB"},
                            {{"m1", "m2", "ppi"}, {"o1", "o2", "ppi"}, {"o2", "o3", "ppi"},
                             {"dA", "m1", "targets"}, {"dA", "m2", "targets"}, {"dA", "o3", "targets"},
                             {"dB", "m1", "targets"}, {"dB", "o1", "targets"}, {"dB", "o2", "targets"}});
  const auto r = rank_drugs(g, SeedSet{"m1", "m2"});
  REQUIRE(r.entries.size() == 2);
  CHECK(r.entries[0].id == "dA");
  CHECK(r.entries[0].score > r.entries[1].score);
}

TEST_CASE("closeness ranking follows breadth-first distances") {
  const auto g = drug_graph({"m1", "m2", "x1", "x2"}, {"near", "far"},
                            {{"m1", "m2", "ppi"}, {"m2", "x1", "ppi"}, {"x1", "x2", "ppi"},
                             {"near", "m1", "targets"}, {"far", "x2", "targets"}});
  RankParams params;
  params.method = RankMethod::kCloseness;
  const auto r = rank_drugs(g, SeedSet{"m1", "m2"}, params);
  REQUIRE(r.entries.size() == 2);
  CHECK(r.entries[0].id == "near");
  CHECK(r.entries[0].score == doctest::Approx(1.0 + 0.5));
  CHECK(r.entries[1].score == doctest::Approx(1.0 / 4 + 1.0 / 3));
}

TEST_CASE("rank_drugs flags graphs without drugs and honors top_k") {
  const auto g = named({"a", "b"}, {{0, 1}}).build();
  RankParams params;
  params.drug_type = "protein";
  params.edge_types = {"ppi"};
  params.top_k = 1;
  const auto r = rank_drugs(g, SeedSet{"a"}, params);
  CHECK(r.entries.size() == 1);
  auto none = drug_graph({"p1"}, {}, {});
  const auto empty = rank_drugs(none, SeedSet{"p1"});
  CHECK(empty.no_drug_nodes);
  CHECK(empty.entries.empty());
}

TEST_CASE("sample trustrank ranking puts kinase inhibitors first") {
  const auto& g = fixtures::sample()->graph;
  const auto seeds = agents::resolve_seeds(g, {"CD2AP", "ABI3", "BACE1", "ARC", "TREM2", "MS4A4A"});
  const auto module = diamond_expand(g, SeedSet(seeds), {10, "ppi"});
  RankParams params;
  params.top_k = 5;
  const auto r = rank_drugs(g, module, params);
  REQUIRE(r.entries.size() == 5);
  std::set<std::string> top2 = {r.entries[0].id, r.entries[1].id};
  CHECK(top2 == std::set<std::string>{"drugbank.DB01254", "drugbank.DB06616"});
  for (std::size_t i = 1; i < r.entries.size(); ++i) CHECK(r.entries[i - 1].score >= r.entries[i].score);
}
