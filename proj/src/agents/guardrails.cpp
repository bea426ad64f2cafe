#include "chatd/agents/guardrails.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <spdlog/spdlog.h>

#include "chatd/paths.hpp"
#include "chatd/prompts.hpp"

namespace chatd::agents {

namespace {

const std::regex& citation_regex() {
  static const std::regex re(R"(\[(tc-\d+|paper:[^\]\s]+)\])");
  return re;
}

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a",     "about", "above", "after", "again", "all",   "also",  "am",    "an",    "and",   "any",
      "are",   "as",    "at",    "be",    "been",  "being", "both",  "but",   "by",    "can",   "could",
      "did",   "do",    "does",  "each",  "for",   "from",  "had",   "has",   "have",  "he",    "her",
      "here",  "his",   "how",   "if",    "in",    "into",  "is",    "it",    "its",   "itself", "may",
      "more",  "most",  "no",    "nor",   "not",   "of",    "on",    "once",  "only",  "or",    "other",
      "our",   "out",   "over",  "own",   "same",  "she",   "should", "so",   "some",  "such",  "than",
      "that",  "the",   "their", "them",  "then",  "there", "these", "they",  "this",  "those", "through",
      "to",    "too",   "under", "until", "up",    "very",  "was",   "we",    "were",  "what",  "when",
      "where", "which", "while", "who",   "whom",  "why",   "will",  "with",  "would", "you",   "your"};
  return words;
}

std::string normalize_input(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool space = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    // U+200B..U+200D and U+FEFF (zero-width characters)
    if (c == 0xE2 && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0x80 &&
        static_cast<unsigned char>(text[i + 2]) >= 0x8B && static_cast<unsigned char>(text[i + 2]) <= 0x8D) {
      i += 2;
      continue;
    }
    if (c == 0xEF && i + 2 < text.size() && static_cast<unsigned char>(text[i + 1]) == 0xBB &&
        static_cast<unsigned char>(text[i + 2]) == 0xBF) {
      i += 2;
      continue;
    }
    if (c == '\n') {
      out += '\n';
      space = false;
      continue;
    }
    if (std::isspace(c)) {
      space = true;
      continue;
    }
    if (space && !out.empty() && out.back() != '\n') out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

bool is_heading(const std::string& paragraph) {
  std::size_t pos = 0;
  while (pos < paragraph.size()) {
    auto nl = paragraph.find('\n', pos);
    if (nl == std::string::npos) nl = paragraph.size();
    const auto line = trim(std::string_view(paragraph).substr(pos, nl - pos));
    if (!line.empty() && line.front() != '#') return false;
    pos = nl + 1;
  }
  return true;
}

}  // namespace

InjectionPatterns::InjectionPatterns(std::vector<std::string> patterns) : sources_(std::move(patterns)) {
  for (const auto& p : sources_) {
    try {
      compiled_.emplace_back(p, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::kParseError, "bad guardrail pattern '" + p + "': " + e.what());
    }
  }
}

InjectionPatterns InjectionPatterns::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::string> patterns;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.rfind("# ", 0) == 0 || line == "#") continue;
    patterns.push_back(line);
  }
  return InjectionPatterns(std::move(patterns));
}

const InjectionPatterns& InjectionPatterns::bundled() {
  static const InjectionPatterns patterns = load(data_dir() / "corpus" / "injection_patterns.txt");
  return patterns;
}

std::optional<std::string> InjectionPatterns::first_match(std::string_view text) const {
  const std::string s(text);
  for (std::size_t i = 0; i < compiled_.size(); ++i) {
    if (std::regex_search(s, compiled_[i])) return sources_[i];
  }
  return std::nullopt;
}

GuardrailVerdict input_guardrail(std::string_view text, const InjectionPatterns& patterns) {
  GuardrailVerdict v;
  if (auto hit = patterns.first_match(normalize_input(text))) {
    v.allowed = false;
    v.reason = "message matches a prompt-injection pattern";
    v.matched_pattern = *hit;
  }
  return v;
}

std::set<std::string> content_tokens(std::string_view text) {
  std::set<std::string> out;
  std::string cur;
  const auto flush = [&] {
    if (cur.size() >= 2 && !stopwords().count(cur)) out.insert(cur);
    cur.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      cur += static_cast<char>(std::tolower(u));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  for (const auto& t : a) inter += b.count(t);
  return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

std::vector<std::string> cited_ids(std::string_view paragraph) {
  std::vector<std::string> out;
  const std::string s(paragraph);
  for (std::sregex_iterator it(s.begin(), s.end(), citation_regex()), end; it != end; ++it) {
    out.push_back((*it)[1].str());
  }
  return out;
}

std::vector<std::string> split_paragraphs(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  std::size_t pos = 0;
  const auto flush = [&] {
    auto p = trim(current);
    if (!p.empty()) out.push_back(std::move(p));
    current.clear();
  };
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    if (trim(line).empty()) {
      flush();
    } else {
      if (!current.empty()) current += '\n';
      current += line;
    }
    pos = nl + 1;
  }
  flush();
  return out;
}

ParagraphVerdict check_paragraph(const std::string& paragraph, const GuardContext& ctx, llm::Provider* provider) {
  ParagraphVerdict v{paragraph, true, ""};
  for (const auto& id : cited_ids(paragraph)) {
    if (!ctx.citations.count(id)) {
      v.kept = false;
      v.reason = "cites unknown source " + id;
      return v;
    }
  }
  const auto stripped = std::regex_replace(paragraph, citation_regex(), " ");
  const auto tokens = content_tokens(stripped);
  if (is_heading(paragraph) || tokens.empty()) {
    v.reason = "no claims";
    return v;
  }
  if (provider) {
    std::string context;
    for (const auto& s : ctx.segments) context += s + "\n";
    try {
      const auto reply = provider->complete(
          {llm::ChatMessage::system(prompts::render_named("guard_check", {{"context", context}, {"paragraph", paragraph}})),
           llm::ChatMessage::user(paragraph)},
          {}, {});
      auto answer = trim(reply.content);
      std::transform(answer.begin(), answer.end(), answer.begin(),
                     [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
      if (answer.rfind("YES", 0) == 0) {
        v.reason = "supported (verifier)";
        return v;
      }
      if (answer.rfind("NO", 0) == 0) {
        v.kept = false;
        v.reason = "unsupported (verifier)";
        return v;
      }
      spdlog::warn("support verifier gave an unclear answer; using token overlap");
    } catch (const Error& e) {
      if (!e.is_provider_error()) throw;
      spdlog::warn("support verifier failed ({}); using token overlap", e.what());
    }
  }
  double best = 0.0;
  for (const auto& s : ctx.segments) best = std::max(best, jaccard(tokens, content_tokens(s)));
  if (best >= kSupportThreshold) {
    v.reason = "supported (overlap)";
  } else {
    v.kept = false;
    v.reason = "unsupported (overlap " + std::to_string(best) + ")";
  }
  return v;
}

std::vector<ParagraphVerdict> output_guardrail(const std::vector<std::string>& paragraphs, const GuardContext& ctx,
                                               llm::Provider* provider) {
  std::vector<ParagraphVerdict> out;
  out.reserve(paragraphs.size());
  for (const auto& p : paragraphs) out.push_back(check_paragraph(p, ctx, provider));
  return out;
}

}  // namespace chatd::agents
