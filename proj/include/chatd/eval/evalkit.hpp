#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace chatd::eval {

/// Attribute mapping; a JSON object.
using Record = nlohmann::json;

/// True when every key/value of `silver` is present in `returned`.
bool record_satisfies(const Record& silver, const Record& returned);

struct HitAssignment {
  std::vector<std::optional<std::size_t>> silver_to_returned;
  std::size_t hits = 0;
};

/// One-to-one assignment of silver records to returned records that satisfy
/// them. Silver records are visited in input order and try returned records
/// in input order; a claimed record is reassigned along an augmenting path
/// when that frees a compatible alternative, so the hit count is maximal.
HitAssignment superset_match(const std::vector<Record>& silver, const std::vector<Record>& returned);

struct F1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

F1 f1_from_hits(std::size_t hits, std::size_t silver, std::size_t returned);

struct Rubric {
  enum class Kind { kManual, kPredicate } kind = Kind::kManual;
  std::vector<std::string> contains;      // all must appear (case-insensitive)
  std::vector<std::string> not_contains;  // none may appear

  bool passes(const std::string& answer) const;
};

struct CallExpectation {
  std::string tool;
  nlohmann::json arguments = nlohmann::json::object();  // subset the call must carry
};

/// One JSON line of a case file:
///   {"id", "question", "agent", "tool", "expected_action", "expected_call": {"tool", "arguments"},
///    "silver": [{...}], "rubric": {"kind": "manual"|"predicate", "contains": [], "not_contains": []}}
struct EvalCase {
  std::string id;
  std::string question;
  std::string agent;
  std::string tool;
  std::optional<std::string> expected_action;
  std::optional<CallExpectation> expected_call;
  std::vector<Record> silver;  // non-empty: call accuracy is the F1 of returned rows
  Rubric rubric;
};

EvalCase case_from_json(const nlohmann::json& doc);
std::vector<EvalCase> load_cases(const std::filesystem::path& jsonl);

struct MetricsRow {
  std::string agent;
  std::string tool;
  std::optional<double> tool_accuracy;
  std::optional<double> call_accuracy;
  bool call_is_f1 = false;
  std::optional<double> answer_accuracy;
  std::size_t cases = 0;
};

struct Averages {
  std::optional<double> tool_accuracy;
  std::optional<double> call_accuracy;
  std::optional<double> answer_accuracy;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;

  /// Arithmetic mean per column over the rows that have a value.
  Averages averages() const;

  /// Rows from JSON: [{"agent", "tool", "tool_accuracy", "call_accuracy",
  /// "call_is_f1", "answer_accuracy"}], null or absent meaning not measured,
  /// or the {"rows": [...]} object written by to_json.
  static MetricsTable from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// Recomputed averages against a reported set, with a per-column flag when
/// they differ by more than `tolerance`.
struct AverageCheck {
  Averages recomputed;
  Averages reported;
  bool tool_differs = false;
  bool call_differs = false;
  bool answer_differs = false;
  bool any() const { return tool_differs || call_differs || answer_differs; }
};

AverageCheck compare_averages(const MetricsTable& table, const Averages& reported, double tolerance = 0.005);

/// Shortest rendering that round-trips within four significant digits
/// ("1", "0.95", "0.852"); anything longer prints with three decimals.
std::string format_metric(double value);

/// Plain-text table: one line per row plus an averages line. With a reported
/// set, a second averages line and a discrepancy note are appended.
std::string render_table(const MetricsTable& table, const std::optional<Averages>& reported = std::nullopt);

/// Scores transcripts (event arrays, one per case id). Throws
/// TranscriptMissing when a case has none.
MetricsTable score_run(const std::vector<EvalCase>& cases, const std::map<std::string, nlohmann::json>& transcripts);

/// CSV with columns case_id, question, answer, verdict (blank) for every
/// case with a manual rubric.
std::string review_sheet(const std::vector<EvalCase>& cases, const std::map<std::string, nlohmann::json>& transcripts);

}  // namespace chatd::eval
