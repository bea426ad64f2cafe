#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "chatd/llm/provider.hpp"

namespace chatd::research {

struct PaperRecord {
  std::string id;  // external id (Semantic Scholar paperId)
  std::string title;
  std::optional<int> year;  // dropped when outside 1800..2100
  std::string venue;
  std::vector<std::string> authors;
  std::string abstract_snippet;
  std::size_t query_index = 0;  // earliest query that returned it
};

using QueryTriple = std::array<std::string, 3>;

struct Decomposition {
  QueryTriple queries;
  bool degraded = false;  // padded, truncated or deduplicated after the re-prompt
  std::size_t provider_calls = 0;
};

/// Parses a reply listing queries: a JSON array of strings, or one query per
/// line (bullets, numbering and quotes stripped).
std::vector<std::string> parse_query_list(std::string_view reply);

/// Asks the provider for three distinct queries, re-prompting once. A second
/// bad reply is deduplicated, then padded with " review" / " clinical trial"
/// variants or truncated, and flagged as degraded.
Decomposition decompose_research_query(std::string_view text, llm::Provider& provider);

class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  /// Throws BackendUnreachable on transport failure or an unusable response.
  virtual std::vector<PaperRecord> search(const std::string& query, std::size_t limit) = 0;
};

/// Parses a Semantic-Scholar search response body ({"data": [...]}).
std::vector<PaperRecord> parse_search_response(const nlohmann::json& body);

struct HttpSearchConfig {
  std::string base_url = "https://api.semanticscholar.org";
  std::string api_key;  // sent as x-api-key when set
  std::chrono::seconds timeout{20};

  /// Reads CHATD_S2_BASE and CHATD_S2_API_KEY over the defaults.
  static HttpSearchConfig from_env();
};

/// GET {base}/graph/v1/paper/search?query=..&limit=..&fields=title,year,venue,authors,abstract
class HttpSearchBackend : public SearchBackend {
 public:
  explicit HttpSearchBackend(HttpSearchConfig config);
  std::vector<PaperRecord> search(const std::string& query, std::size_t limit) override;

 private:
  HttpSearchConfig config_;
  std::string origin_;
  std::string prefix_;
};

/// Replays recorded responses. The directory holds index.json mapping each
/// query string to a response file (Semantic-Scholar body) or to an error:
///   {"queries": {"<query>": "q1.json", "<other>": {"error": "timeout"}}}
/// Unknown queries fail as unreachable.
class FixtureSearchBackend : public SearchBackend {
 public:
  explicit FixtureSearchBackend(std::filesystem::path dir);
  std::vector<PaperRecord> search(const std::string& query, std::size_t limit) override;

 private:
  std::filesystem::path dir_;
};

struct QueryOutcome {
  std::string query;
  std::size_t count = 0;
  std::optional<std::string> error;
};

struct SearchReport {
  std::string question;
  QueryTriple queries;
  std::vector<QueryOutcome> per_query;  // one per query, in order
  std::vector<PaperRecord> records;     // merged by id, sorted by year desc then title
  bool degraded = false;
};

/// Issues the three queries concurrently and merges the results in query
/// order. Throws BackendUnreachable only when all three fail.
SearchReport search_literature(const QueryTriple& queries, SearchBackend& backend, std::size_t limit = 10,
                               std::string question = {});

nlohmann::json to_json(const PaperRecord& record);
nlohmann::json to_json(const SearchReport& report);

}  // namespace chatd::research
