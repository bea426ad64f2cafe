#pragma once

#include <filesystem>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "chatd/llm/provider.hpp"

namespace chatd::agents {

struct GuardrailVerdict {
  bool allowed = true;
  std::string reason;  // non-empty when blocked
  std::optional<std::string> matched_pattern;
};

/// Case-insensitive regular expressions describing prompt-injection attempts.
class InjectionPatterns {
 public:
  explicit InjectionPatterns(std::vector<std::string> patterns);

  /// One pattern per line; blank lines and lines starting with "# " are skipped.
  static InjectionPatterns load(const std::filesystem::path& path);
  /// data_dir()/corpus/injection_patterns.txt, loaded once.
  static const InjectionPatterns& bundled();

  const std::vector<std::string>& patterns() const { return sources_; }
  std::optional<std::string> first_match(std::string_view text) const;

 private:
  std::vector<std::string> sources_;
  std::vector<std::regex> compiled_;
};

/// Screens a user message. Zero-width characters are stripped and whitespace
/// collapsed before matching.
GuardrailVerdict input_guardrail(std::string_view text, const InjectionPatterns& patterns = InjectionPatterns::bundled());

inline constexpr std::string_view kOmissionMarker = "[omitted: unsupported by retrieved context]";
inline constexpr double kSupportThreshold = 0.2;

/// What a final answer may rely on: text segments from the turn's results
/// and the citation ids that exist in the session.
struct GuardContext {
  std::vector<std::string> segments;
  std::set<std::string> citations;  // "tc-3", "paper:abc"
};

struct ParagraphVerdict {
  std::string paragraph;
  bool kept = true;
  std::string reason;
};

/// Lowercased alphanumeric tokens of length >= 2, stopwords removed.
std::set<std::string> content_tokens(std::string_view text);
double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);

/// Citation ids in [tc-N] and [paper:ID] markers, in order of appearance.
std::vector<std::string> cited_ids(std::string_view paragraph);

/// Splits on blank lines; paragraphs are trimmed and empty ones dropped.
std::vector<std::string> split_paragraphs(std::string_view text);

/// Checks one paragraph. A citation to an id outside ctx.citations removes
/// it. Headings and token-free paragraphs are kept. Otherwise the provider,
/// when given, answers a YES/NO support question; without a provider, or
/// when it fails, the paragraph is kept iff its best content-token Jaccard
/// against any context segment reaches kSupportThreshold.
ParagraphVerdict check_paragraph(const std::string& paragraph, const GuardContext& ctx, llm::Provider* provider);

std::vector<ParagraphVerdict> output_guardrail(const std::vector<std::string>& paragraphs, const GuardContext& ctx,
                                               llm::Provider* provider = nullptr);

}  // namespace chatd::agents
