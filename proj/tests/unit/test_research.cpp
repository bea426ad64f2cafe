#include <doctest.h>

#include <atomic>
#include <chrono>
#include <map>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "../support/fixtures.hpp"
#include "../support/stubs.hpp"
#include "chatd/llm/scripted.hpp"
#include "chatd/research/literature.hpp"

using namespace chatd;
using namespace chatd::research;
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

llm::ScriptedProvider replies(const std::vector<std::string>& contents) {
  json doc = {{"exchanges", json::array()}};
  for (const auto& c : contents) doc["exchanges"].push_back({{"response", {{"content", c}}}});
  return llm::ScriptedProvider::from_json(doc);
}

/// In-memory backend: a query maps to paper ids, or is absent (fails).
class MapBackend : public SearchBackend {
 public:
  std::map<std::string, std::vector<std::string>> results;
  std::chrono::milliseconds delay{0};
  std::atomic<int> calls{0};

  std::vector<PaperRecord> search(const std::string& query, std::size_t limit) override {
    ++calls;
    std::this_thread::sleep_for(delay);
    auto it = results.find(query);
    if (it == results.end()) throw Error(ErrorCode::kBackendUnreachable, "timeout for " + query);
    std::vector<PaperRecord> out;
    for (const auto& id : it->second) {
      if (out.size() == limit) break;
      PaperRecord r;
      r.id = id;
      r.title = "title " + id;
      r.year = 2020;
      out.push_back(r);
    }
    return out;
  }
};

}  // namespace

TEST_CASE("query lists parse from JSON arrays and from lines") {
  CHECK(parse_query_list(R"(Here: ["a", " b ", "c"])") == std::vector<std::string>{"a", "b", "c"});
  CHECK(parse_query_list("1. first\n- second\n\"third\"\n\n") == std::vector<std::string>{"first", "second", "third"});
  CHECK(parse_query_list("").empty());
}

TEST_CASE("three distinct queries are accepted as given") {
  auto p = replies({R"(["q one", "q two", "q three"])"});
  const auto d = decompose_research_query("new drugs for Alzheimer's disease", p);
  CHECK(d.queries == QueryTriple{"q one", "q two", "q three"});
  CHECK_FALSE(d.degraded);
  CHECK(d.provider_calls == 1);
}

TEST_CASE("a bad reply is re-prompted once") {
  auto p = replies({R"(["only one"])", R"(["x", "y", "z"])"});
  const auto d = decompose_research_query("question", p);
  CHECK(d.queries == QueryTriple{"x", "y", "z"});
  CHECK_FALSE(d.degraded);
  CHECK(d.provider_calls == 2);
}

TEST_CASE("two bad replies are padded, deduplicated or truncated") {
  SUBCASE("two queries are padded") {
    auto p = replies({"[]", R"(["alpha", "beta"])"});
    const auto d = decompose_research_query("question", p);
    CHECK(d.degraded);
    CHECK(d.queries == QueryTriple{"alpha", "beta", "alpha review"});
  }
  SUBCASE("identical queries collapse before padding") {
    auto p = replies({"[]", R"(["Same Query", "same  query", "same query"])"});
    const auto d = decompose_research_query("question", p);
    CHECK(d.degraded);
    CHECK(d.queries == QueryTriple{"Same Query", "Same Query review", "Same Query clinical trial"});
  }
  SUBCASE("an empty reply pads from the question") {
    auto p = replies({"", ""});
    const auto d = decompose_research_query("tau drugs", p);
    CHECK(d.queries == QueryTriple{"tau drugs review", "tau drugs clinical trial", "tau drugs 2"});
  }
  SUBCASE("four queries are truncated") {
    auto p = replies({"[]", R"(["a", "b", "c", "d"])"});
    const auto d = decompose_research_query("question", p);
    CHECK(d.degraded);
    CHECK(d.queries == QueryTriple{"a", "b", "c"});
  }
  auto p = replies({});
  CHECK(code_of([&] { decompose_research_query("   ", p); }) == ErrorCode::kInvalidParams);
}

TEST_CASE("results merge by id in query order") {
  MapBackend b;
  b.results = {{"q1", {"p1", "p2", "p3", "p4", "p5"}},
               {"q2", {"p3", "p6", "p7", "p8", "p9"}},
               {"q3", {"p1", "p5", "p10", "p11", "p12"}}};
  const auto r = search_literature({"q1", "q2", "q3"}, b, 10, "question");
  CHECK(r.records.size() == 12);  // 15 hits, 3 duplicates
  std::set<std::string> ids;
  for (const auto& rec : r.records) ids.insert(rec.id);
  CHECK(ids.size() == 12);
  for (const auto& rec : r.records) {
    if (rec.id == "p3" || rec.id == "p1" || rec.id == "p5") CHECK(rec.query_index == 0);
    if (rec.id == "p10") CHECK(rec.query_index == 2);
  }
  REQUIRE(r.per_query.size() == 3);
  CHECK(r.per_query[1].count == 5);
  CHECK(r.question == "question");
}

TEST_CASE("one failing query leaves the others") {
  MapBackend b;
  b.results = {{"q1", {"a"}}, {"q3", {"b", "c"}}};
  const auto r = search_literature({"q1", "q2", "q3"}, b);
  CHECK(r.records.size() == 3);
  CHECK(r.per_query[1].error.has_value());
  CHECK_FALSE(r.per_query[0].error.has_value());
}

TEST_CASE("all queries failing is an error") {
  MapBackend b;
  CHECK(code_of([&] { search_literature({"x", "y", "z"}, b); }) == ErrorCode::kBackendUnreachable);
}

TEST_CASE("queries run concurrently") {
  MapBackend b;
  b.results = {{"q1", {"a"}}, {"q2", {"b"}}, {"q3", {"c"}}};
  b.delay = std::chrono::milliseconds(300);
  const auto start = std::chrono::steady_clock::now();
  search_literature({"q1", "q2", "q3"}, b);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(elapsed < std::chrono::milliseconds(800));
  CHECK(b.calls == 3);
}

TEST_CASE("records sort by year then title") {
  const json body = {{"data",
                      {{{"paperId", "a"}, {"title", "B"}, {"year", 2019}},
                       {{"paperId", "b"}, {"title", "A"}, {"year", 2019}},
                       {{"paperId", "c"}, {"title", "C"}, {"year", 2023}},
                       {{"paperId", "d"}, {"title", "D"}}}}};
  class Fixed : public SearchBackend {
   public:
    explicit Fixed(json b) : body_(std::move(b)) {}
    std::vector<PaperRecord> search(const std::string&, std::size_t) override { return parse_search_response(body_); }

   private:
    json body_;
  } backend(body);
  const auto r = search_literature({"1", "2", "3"}, backend);
  std::vector<std::string> ids;
  for (const auto& rec : r.records) ids.push_back(rec.id);
  CHECK(ids == std::vector<std::string>{"c", "b", "a", "d"});
}

TEST_CASE("search responses are parsed defensively") {
  const json body = {{"data",
                      {{{"paperId", "x1"},
                        {"title", "T"},
                        {"year", 3000},
                        {"authors", {{{"name", "A"}}, "B", 5}},
                        {"abstract", std::string(1000, 'w')}},
                       {{"title", "no id"}},
                       "junk"}}};
  const auto recs = parse_search_response(body);
  REQUIRE(recs.size() == 1);
  CHECK_FALSE(recs[0].year.has_value());
  CHECK(recs[0].authors == std::vector<std::string>{"A", "B"});
  CHECK(recs[0].abstract_snippet.size() <= 303);
  CHECK(code_of([] { parse_search_response(json::object()); }) == ErrorCode::kBackendUnreachable);
}

TEST_CASE("HTTP backend sends the documented request") {
  stub::Server server;
  std::string seen_query;
  std::string seen_fields;
  std::string seen_key;
  server.http().Get("/graph/v1/paper/search", [&](const httplib::Request& req, httplib::Response& res) {
    seen_query = req.get_param_value("query");
    seen_fields = req.get_param_value("fields");
    seen_key = req.get_header_value("x-api-key");
    const int limit = std::stoi(req.get_param_value("limit"));
    res.set_content(stub::search_body("s", limit + 2).dump(), "application/json");
  });
  server.start();
  HttpSearchConfig cfg;
  cfg.base_url = server.url();
  cfg.api_key = "k";
  HttpSearchBackend backend(cfg);
  const auto recs = backend.search("tau therapy", 3);
  CHECK(recs.size() == 3);
  CHECK(seen_query == "tau therapy");
  CHECK(seen_fields == "title,year,venue,authors,abstract");
  CHECK(seen_key == "k");
}

TEST_CASE("HTTP backend failures are unreachable") {
  stub::Server server;
  server.http().Get("/graph/v1/paper/search",
                    [](const httplib::Request&, httplib::Response& res) { res.status = 429; });
  server.http().Get("/bad/graph/v1/paper/search", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "text/plain");
  });
  server.start();
  HttpSearchConfig cfg;
  cfg.base_url = server.url();
  CHECK(code_of([&] { HttpSearchBackend(cfg).search("q", 5); }) == ErrorCode::kBackendUnreachable);
  cfg.base_url = server.url() + "/bad/";
  CHECK(code_of([&] { HttpSearchBackend(cfg).search("q", 5); }) == ErrorCode::kBackendUnreachable);
  cfg.base_url = "http://127.0.0.1:1";
  cfg.timeout = std::chrono::seconds(2);
  CHECK(code_of([&] { HttpSearchBackend(cfg).search("q", 5); }) == ErrorCode::kBackendUnreachable);
  cfg.base_url = "file:///tmp";
  CHECK(code_of([&] { HttpSearchBackend{cfg}; }) == ErrorCode::kInvalidParams);
}

TEST_CASE("bundled literature fixture answers the recorded queries") {
  const auto backend = fixtures::literature();
  const QueryTriple q = {"Alzheimer's disease new drug development 2023",
                         "new drugs for Alzheimer's disease clinical trials 2023",
                         "novel therapeutic targets for Alzheimer's disease review"};
  const auto r = search_literature(q, *backend, 5);
  CHECK_FALSE(r.records.empty());
  for (const auto& o : r.per_query) CHECK(o.count <= 5);
  CHECK(code_of([&] { backend->search("never recorded", 5); }) == ErrorCode::kBackendUnreachable);
  const auto j = to_json(r);
  CHECK(j["records"].size() == r.records.size());
  CHECK(j["queries"][0] == q[0]);
}
