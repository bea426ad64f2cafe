#include "chatd/eval/evalkit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "chatd/error.hpp"

namespace chatd::eval {

using nlohmann::json;

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::optional<double> optional_number(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw Error(ErrorCode::kParseError, std::string(key) + " must be a number or null");
  return it->get<double>();
}

std::optional<double> mean(const std::vector<double>& xs) {
  if (xs.empty()) return std::nullopt;
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

const json* first_event(const json& events, std::string_view type) {
  for (const auto& e : events) {
    if (e.value("type", std::string{}) == type) return &e;
  }
  return nullptr;
}

std::string final_text(const json& events) {
  std::string text;
  for (const auto& e : events) {
    if (e.value("type", std::string{}) == "final") text = e.value("text", std::string{});
  }
  return text;
}

std::vector<json> tool_records(const json& events) {
  std::vector<json> out;
  for (const auto& e : events) {
    if (e.value("type", std::string{}) == "tool_call" && e.contains("record")) out.push_back(e["record"]);
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string cell(const std::optional<double>& v, bool f1 = false) {
  if (!v) return "-";
  return format_metric(*v) + (f1 ? " (F1)" : "");
}

}  // namespace

bool record_satisfies(const Record& silver, const Record& returned) {
  if (!silver.is_object() || !returned.is_object()) return false;
  for (const auto& [key, value] : silver.items()) {
    auto it = returned.find(key);
    if (it == returned.end() || *it != value) return false;
  }
  return true;
}

HitAssignment superset_match(const std::vector<Record>& silver, const std::vector<Record>& returned) {
  std::vector<std::vector<std::size_t>> compatible(silver.size());
  for (std::size_t s = 0; s < silver.size(); ++s) {
    for (std::size_t r = 0; r < returned.size(); ++r) {
      if (record_satisfies(silver[s], returned[r])) compatible[s].push_back(r);
    }
  }
  std::vector<std::optional<std::size_t>> owner(returned.size());
  HitAssignment out;
  out.silver_to_returned.assign(silver.size(), std::nullopt);
  std::vector<char> visited;
  std::function<bool(std::size_t)> augment = [&](std::size_t s) {
    for (std::size_t r : compatible[s]) {
      if (visited[r]) continue;
      visited[r] = 1;
      if (!owner[r] || augment(*owner[r])) {
        owner[r] = s;
        out.silver_to_returned[s] = r;
        return true;
      }
    }
    return false;
  };
  for (std::size_t s = 0; s < silver.size(); ++s) {
    visited.assign(returned.size(), 0);
    if (augment(s)) ++out.hits;
  }
  return out;
}

F1 f1_from_hits(std::size_t hits, std::size_t silver, std::size_t returned) {
  if (hits > std::min(silver, returned)) {
    throw Error(ErrorCode::kInvalidParams, "hits exceed the silver or returned count");
  }
  F1 out;
  out.precision = returned == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(returned);
  out.recall = silver == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(silver);
  const double denom = out.precision + out.recall;
  out.f1 = denom == 0.0 ? 0.0 : 2.0 * out.precision * out.recall / denom;
  return out;
}

bool Rubric::passes(const std::string& answer) const {
  const auto text = lower(answer);
  for (const auto& c : contains) {
    if (text.find(lower(c)) == std::string::npos) return false;
  }
  for (const auto& c : not_contains) {
    if (text.find(lower(c)) != std::string::npos) return false;
  }
  return true;
}

EvalCase case_from_json(const json& doc) {
  try {
    EvalCase c;
    c.id = doc.at("id").get<std::string>();
    c.question = doc.value("question", std::string{});
    c.agent = doc.value("agent", std::string{});
    c.tool = doc.value("tool", std::string{});
    if (auto it = doc.find("expected_action"); it != doc.end() && it->is_string()) {
      c.expected_action = it->get<std::string>();
    }
    if (auto it = doc.find("expected_call"); it != doc.end() && it->is_object()) {
      c.expected_call = CallExpectation{it->at("tool").get<std::string>(), it->value("arguments", json::object())};
    }
    if (auto it = doc.find("silver"); it != doc.end()) c.silver = it->get<std::vector<Record>>();
    if (auto it = doc.find("rubric"); it != doc.end()) {
      const auto kind = it->value("kind", std::string("manual"));
      if (kind == "predicate") {
        c.rubric.kind = Rubric::Kind::kPredicate;
      } else if (kind != "manual") {
        throw Error(ErrorCode::kParseError, "unknown rubric kind '" + kind + "'");
      }
      c.rubric.contains = it->value("contains", std::vector<std::string>{});
      c.rubric.not_contains = it->value("not_contains", std::vector<std::string>{});
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("eval case: ") + e.what());
  }
}

std::vector<EvalCase> load_cases(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + jsonl.string());
  std::vector<EvalCase> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(case_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kParseError, jsonl.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Averages MetricsTable::averages() const {
  std::vector<double> tool;
  std::vector<double> call;
  std::vector<double> answer;
  for (const auto& r : rows) {
    if (r.tool_accuracy) tool.push_back(*r.tool_accuracy);
    if (r.call_accuracy) call.push_back(*r.call_accuracy);
    if (r.answer_accuracy) answer.push_back(*r.answer_accuracy);
  }
  return {mean(tool), mean(call), mean(answer)};
}

MetricsTable MetricsTable::from_json(const json& doc) {
  MetricsTable t;
  // Accepts the bare row array or the {"rows": [...]} form written by to_json.
  const auto& rows = doc.is_object() && doc.contains("rows") ? doc["rows"] : doc;
  try {
    for (const auto& r : rows) {
      MetricsRow row;
      row.agent = r.at("agent").get<std::string>();
      row.tool = r.at("tool").get<std::string>();
      row.tool_accuracy = optional_number(r, "tool_accuracy");
      row.call_accuracy = optional_number(r, "call_accuracy");
      row.call_is_f1 = r.value("call_is_f1", false);
      row.answer_accuracy = optional_number(r, "answer_accuracy");
      row.cases = r.value("cases", std::size_t{0});
      for (const auto& v : {row.tool_accuracy, row.call_accuracy, row.answer_accuracy}) {
        if (v && (*v < 0.0 || *v > 1.0)) throw Error(ErrorCode::kParseError, "metric outside [0, 1]");
      }
      t.rows.push_back(std::move(row));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("metrics rows: ") + e.what());
  }
  return t;
}

json MetricsTable::to_json() const {
  const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"agent", r.agent},
                   {"tool", r.tool},
                   {"tool_accuracy", opt(r.tool_accuracy)},
                   {"call_accuracy", opt(r.call_accuracy)},
                   {"call_is_f1", r.call_is_f1},
                   {"answer_accuracy", opt(r.answer_accuracy)},
                   {"cases", r.cases}});
  }
  const auto avg = averages();
  return {{"rows", out},
          {"averages",
           {{"tool_accuracy", opt(avg.tool_accuracy)},
            {"call_accuracy", opt(avg.call_accuracy)},
            {"answer_accuracy", opt(avg.answer_accuracy)}}}};
}

AverageCheck compare_averages(const MetricsTable& table, const Averages& reported, double tolerance) {
  AverageCheck out;
  out.recomputed = table.averages();
  out.reported = reported;
  const auto differs = [&](const std::optional<double>& a, const std::optional<double>& b) {
    if (!a || !b) return a.has_value() != b.has_value();
    return std::fabs(*a - *b) > tolerance;
  };
  out.tool_differs = differs(out.recomputed.tool_accuracy, reported.tool_accuracy);
  out.call_differs = differs(out.recomputed.call_accuracy, reported.call_accuracy);
  out.answer_differs = differs(out.recomputed.answer_accuracy, reported.answer_accuracy);
  return out;
}

std::string format_metric(double value) {
  // Fixture values (two or three decimals) print verbatim; computed means are cut to three.
  char buf[64];
  for (int precision = 1; precision <= 4; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.3f", value);
  return buf;
}

std::string render_table(const MetricsTable& table, const std::optional<Averages>& reported) {
  std::vector<std::vector<std::string>> lines = {
      {"Agent", "Tool", "Tool-Accuracy", "Call-Accuracy", "Answer-Accuracy"}};
  for (const auto& r : table.rows) {
    lines.push_back({r.agent, r.tool, cell(r.tool_accuracy), cell(r.call_accuracy, r.call_is_f1),
                     cell(r.answer_accuracy)});
  }
  const auto fixed3 = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return std::string(buf);
  };
  const auto avg = table.averages();
  lines.push_back({"Average", "(recomputed)", fixed3(avg.tool_accuracy), fixed3(avg.call_accuracy),
                   fixed3(avg.answer_accuracy)});
  std::optional<AverageCheck> check;
  if (reported) {
    check = compare_averages(table, *reported);
    lines.push_back({"Average", "(reported)", cell(reported->tool_accuracy), cell(reported->call_accuracy),
                     cell(reported->answer_accuracy)});
  }
  std::vector<std::size_t> width(5, 0);
  for (const auto& l : lines) {
    for (std::size_t i = 0; i < 5; ++i) width[i] = std::max(width[i], l[i].size());
  }
  std::ostringstream out;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    for (std::size_t i = 0; i < 5; ++i) {
      out << lines[n][i];
      if (i + 1 < 5) out << std::string(width[i] - lines[n][i].size() + 2, ' ');
    }
    out << '\n';
    if (n == 0 || n == table.rows.size()) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out << std::string(total - 2, '-') << '\n';
    }
  }
  if (check && check->any()) {
    out << "NOTE: reported averages differ from the row means:";
    if (check->tool_differs) out << " Tool-Accuracy";
    if (check->call_differs) out << " Call-Accuracy";
    if (check->answer_differs) out << " Answer-Accuracy";
    out << '\n';
  }
  return out.str();
}

MetricsTable score_run(const std::vector<EvalCase>& cases, const std::map<std::string, json>& transcripts) {
  struct Acc {
    std::vector<double> tool;
    std::vector<double> call;
    bool f1 = false;
    std::vector<double> answer;
    std::size_t cases = 0;
  };
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, Acc> acc;
  for (const auto& c : cases) {
    auto it = transcripts.find(c.id);
    if (it == transcripts.end()) throw Error(ErrorCode::kTranscriptMissing, c.id);
    const auto& events = it->second;
    const auto key = std::make_pair(c.agent, c.tool);
    if (!acc.count(key)) order.push_back(key);
    auto& a = acc[key];
    ++a.cases;

    if (c.expected_action) {
      const auto* plan = first_event(events, "plan_step");
      a.tool.push_back(plan && plan->value("action", std::string{}) == *c.expected_action ? 1.0 : 0.0);
    }
    const auto records = tool_records(events);
    if (!c.silver.empty()) {
      a.f1 = true;
      std::vector<Record> returned;
      for (const auto& r : records) {
        if (r.contains("rows") && r["rows"].is_array()) {
          returned = r["rows"].get<std::vector<Record>>();
          break;
        }
      }
      const auto m = superset_match(c.silver, returned);
      a.call.push_back(f1_from_hits(m.hits, c.silver.size(), returned.size()).f1);
    } else if (c.expected_call) {
      const bool ok = std::any_of(records.begin(), records.end(), [&](const json& r) {
        return r.value("tool", std::string{}) == c.expected_call->tool && r.value("status", std::string{}) == "ok" &&
               record_satisfies(c.expected_call->arguments, r.value("arguments", json::object()));
      });
      a.call.push_back(ok ? 1.0 : 0.0);
    }
    if (c.rubric.kind == Rubric::Kind::kPredicate) a.answer.push_back(c.rubric.passes(final_text(events)) ? 1.0 : 0.0);
  }
  MetricsTable table;
  for (const auto& key : order) {
    const auto& a = acc.at(key);
    table.rows.push_back({key.first, key.second, mean(a.tool), mean(a.call), a.f1, mean(a.answer), a.cases});
  }
  return table;
}

std::string review_sheet(const std::vector<EvalCase>& cases, const std::map<std::string, json>& transcripts) {
  std::ostringstream out;
  out << "case_id,question,answer,verdict\n";
  for (const auto& c : cases) {
    if (c.rubric.kind != Rubric::Kind::kManual) continue;
    auto it = transcripts.find(c.id);
    if (it == transcripts.end()) throw Error(ErrorCode::kTranscriptMissing, c.id);
    out << csv_field(c.id) << ',' << csv_field(c.question) << ',' << csv_field(final_text(it->second)) << ",\n";
  }
  return out.str();
}

}  // namespace chatd::eval
