#include "chatd/research/literature.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <future>
#include <map>
#include <regex>
#include <set>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "chatd/prompts.hpp"

namespace chatd::research {

using nlohmann::json;

namespace {

constexpr std::size_t kSnippetChars = 300;

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Lowercased, single-spaced form used for distinctness checks.
std::string normalize(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::vector<std::string> dedupe(const std::vector<std::string>& queries) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& q : queries) {
    if (q.empty()) continue;
    if (seen.insert(normalize(q)).second) out.push_back(q);
  }
  return out;
}

bool is_valid_triple(const std::vector<std::string>& queries) {
  return queries.size() == 3 && dedupe(queries).size() == 3;
}

std::string snippet(const std::string& text) {
  if (text.size() <= kSnippetChars) return text;
  auto cut = text.rfind(' ', kSnippetChars);
  if (cut == std::string::npos || cut < kSnippetChars / 2) cut = kSnippetChars;
  return text.substr(0, cut) + "...";
}

std::string string_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it != obj.end() && it->is_string() ? it->get<std::string>() : std::string{};
}

}  // namespace

std::vector<std::string> parse_query_list(std::string_view reply) {
  const auto open = reply.find('[');
  const auto close = reply.rfind(']');
  if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
    try {
      const auto doc = json::parse(reply.substr(open, close - open + 1));
      if (doc.is_array() && std::all_of(doc.begin(), doc.end(), [](const json& v) { return v.is_string(); })) {
        std::vector<std::string> out;
        for (const auto& v : doc) {
          auto q = trim(v.get<std::string>());
          if (!q.empty()) out.push_back(std::move(q));
        }
        return out;
      }
    } catch (const json::parse_error&) {
      // not JSON; read it line by line
    }
  }
  static const std::regex kBullet(R"(^\s*(?:[-*•]|\d+[.)])\s*)");
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= reply.size()) {
    auto nl = reply.find('\n', pos);
    if (nl == std::string_view::npos) nl = reply.size();
    auto line = std::regex_replace(std::string(reply.substr(pos, nl - pos)), kBullet, "");
    line = trim(line);
    if (line.size() >= 2 && (line.front() == '"' || line.front() == '\'') && line.back() == line.front()) {
      line = trim(line.substr(1, line.size() - 2));
    }
    if (!line.empty()) out.push_back(std::move(line));
    pos = nl + 1;
  }
  return out;
}

Decomposition decompose_research_query(std::string_view text, llm::Provider& provider) {
  const auto question = trim(text);
  if (question.empty()) throw Error(ErrorCode::kInvalidParams, "empty research request");
  std::vector<llm::ChatMessage> msgs = {llm::ChatMessage::system(prompts::get("research_decompose")),
                                        llm::ChatMessage::user(question)};
  Decomposition out;
  auto reply = provider.complete(msgs, {}, {});
  ++out.provider_calls;
  auto queries = parse_query_list(reply.content);
  if (!is_valid_triple(queries)) {
    msgs.push_back(llm::ChatMessage::assistant(reply.content));
    msgs.push_back(llm::ChatMessage::user("That was not three distinct queries. Reply with a JSON array of exactly "
                                          "three different search queries."));
    reply = provider.complete(msgs, {}, {});
    ++out.provider_calls;
    queries = parse_query_list(reply.content);
    if (!is_valid_triple(queries)) {
      out.degraded = true;
      queries = dedupe(queries);
      if (queries.size() > 3) queries.resize(3);
      const std::string base = queries.empty() ? question : queries.front();
      for (const auto& pad : {base + " review", base + " clinical trial"}) {
        if (queries.size() == 3) break;
        queries.push_back(pad);
        queries = dedupe(queries);
      }
      for (int n = 2; queries.size() < 3; ++n) {
        queries.push_back(base + " " + std::to_string(n));
        queries = dedupe(queries);
      }
    }
  }
  for (std::size_t i = 0; i < 3; ++i) out.queries[i] = queries[i];
  return out;
}

std::vector<PaperRecord> parse_search_response(const json& body) {
  if (!body.is_object() || !body.contains("data") || !body["data"].is_array()) {
    throw Error(ErrorCode::kBackendUnreachable, "search response has no data array");
  }
  std::vector<PaperRecord> out;
  for (const auto& item : body["data"]) {
    if (!item.is_object()) continue;
    PaperRecord rec;
    rec.id = string_field(item, "paperId");
    if (rec.id.empty()) continue;
    rec.title = string_field(item, "title");
    if (auto it = item.find("year"); it != item.end() && it->is_number_integer()) {
      const int y = it->get<int>();
      if (y >= 1800 && y <= 2100) rec.year = y;
    }
    rec.venue = string_field(item, "venue");
    if (auto it = item.find("authors"); it != item.end() && it->is_array()) {
      for (const auto& a : *it) {
        if (a.is_object()) {
          auto name = string_field(a, "name");
          if (!name.empty()) rec.authors.push_back(std::move(name));
        } else if (a.is_string()) {
          rec.authors.push_back(a.get<std::string>());
        }
      }
    }
    rec.abstract_snippet = snippet(string_field(item, "abstract"));
    out.push_back(std::move(rec));
  }
  return out;
}

HttpSearchConfig HttpSearchConfig::from_env() {
  HttpSearchConfig cfg;
  if (const char* v = std::getenv("CHATD_S2_BASE"); v && *v) cfg.base_url = v;
  if (const char* v = std::getenv("CHATD_S2_API_KEY"); v && *v) cfg.api_key = v;
  return cfg;
}

HttpSearchBackend::HttpSearchBackend(HttpSearchConfig config) : config_(std::move(config)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.base_url, m, kUrl)) {
    throw Error(ErrorCode::kInvalidParams, "search URL must be http(s)://host[:port][/prefix]: " + config_.base_url);
  }
  origin_ = m[1].str();
  prefix_ = m[2].str();
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

std::vector<PaperRecord> HttpSearchBackend::search(const std::string& query, std::size_t limit) {
  httplib::Client client(origin_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  httplib::Params params = {{"query", query},
                            {"limit", std::to_string(limit)},
                            {"fields", "title,year,venue,authors,abstract"}};
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("x-api-key", config_.api_key);
  auto res = client.Get(prefix_ + "/graph/v1/paper/search", params, headers);
  if (!res) throw Error(ErrorCode::kBackendUnreachable, origin_ + ": " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw Error(ErrorCode::kBackendUnreachable, origin_ + " answered HTTP " + std::to_string(res->status));
  }
  try {
    auto records = parse_search_response(json::parse(res->body));
    if (records.size() > limit) records.resize(limit);
    return records;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kBackendUnreachable, std::string("search response is not JSON: ") + e.what());
  }
}

FixtureSearchBackend::FixtureSearchBackend(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::exists(dir_ / "index.json")) {
    throw Error(ErrorCode::kIo, "fixture directory without index.json: " + dir_.string());
  }
}

std::vector<PaperRecord> FixtureSearchBackend::search(const std::string& query, std::size_t limit) {
  const auto read = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + p.string());
    try {
      return json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kParseError, p.string() + ": " + e.what());
    }
  };
  const auto index = read(dir_ / "index.json");
  const auto& queries = index.contains("queries") ? index["queries"] : index;
  auto it = queries.find(query);
  if (it == queries.end()) throw Error(ErrorCode::kBackendUnreachable, "no recorded response for '" + query + "'");
  if (it->is_object()) {
    throw Error(ErrorCode::kBackendUnreachable, "recorded failure: " + it->value("error", std::string("error")));
  }
  auto records = parse_search_response(read(dir_ / it->get<std::string>()));
  if (records.size() > limit) records.resize(limit);
  return records;
}

SearchReport search_literature(const QueryTriple& queries, SearchBackend& backend, std::size_t limit,
                               std::string question) {
  SearchReport report;
  report.question = std::move(question);
  report.queries = queries;
  std::array<std::future<std::vector<PaperRecord>>, 3> pending;
  for (std::size_t i = 0; i < 3; ++i) {
    pending[i] = std::async(std::launch::async, [&backend, &queries, i, limit] {
      return backend.search(queries[i], limit);
    });
  }
  std::map<std::string, std::size_t> position;
  std::vector<std::string> errors;
  for (std::size_t i = 0; i < 3; ++i) {
    QueryOutcome outcome{queries[i], 0, std::nullopt};
    try {
      auto records = pending[i].get();
      outcome.count = records.size();
      for (auto& rec : records) {
        if (position.count(rec.id)) continue;  // earliest query keeps it
        rec.query_index = i;
        position.emplace(rec.id, report.records.size());
        report.records.push_back(std::move(rec));
      }
    } catch (const Error& e) {
      outcome.error = e.what();
      errors.push_back(e.what());
    }
    report.per_query.push_back(std::move(outcome));
  }
  if (errors.size() == 3) {
    throw Error(ErrorCode::kBackendUnreachable, "all literature queries failed; first: " + errors.front());
  }
  std::sort(report.records.begin(), report.records.end(), [](const PaperRecord& a, const PaperRecord& b) {
    const int ya = a.year.value_or(-1);
    const int yb = b.year.value_or(-1);
    if (ya != yb) return ya > yb;
    if (a.title != b.title) return a.title < b.title;
    return a.id < b.id;
  });
  return report;
}

json to_json(const PaperRecord& record) {
  json out = {{"id", record.id},
              {"title", record.title},
              {"venue", record.venue},
              {"authors", record.authors},
              {"abstract", record.abstract_snippet},
              {"query_index", record.query_index}};
  out["year"] = record.year ? json(*record.year) : json(nullptr);
  return out;
}

json to_json(const SearchReport& report) {
  json per_query = json::array();
  for (const auto& q : report.per_query) {
    json item = {{"query", q.query}, {"count", q.count}};
    if (q.error) item["error"] = *q.error;
    per_query.push_back(std::move(item));
  }
  json records = json::array();
  for (const auto& r : report.records) records.push_back(to_json(r));
  return {{"question", report.question},
          {"queries", report.queries},
          {"per_query", per_query},
          {"records", records},
          {"degraded", report.degraded}};
}

}  // namespace chatd::research
