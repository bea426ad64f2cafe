#include "chatd/query/embed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace chatd::query {

Embedding embed_text(std::string_view text) {
  std::string lower(text);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower.size() < 3) return {};
  std::map<std::string, double> counts;
  for (std::size_t i = 0; i + 3 <= lower.size(); ++i) counts[lower.substr(i, 3)] += 1.0;
  double sq = 0.0;
  for (const auto& [_, c] : counts) sq += c * c;
  const double n = std::sqrt(sq);
  Embedding out;
  out.reserve(counts.size());
  for (const auto& [k, c] : counts) out.emplace_back(k, c / n);
  return out;
}

double dot(const Embedding& a, const Embedding& b) {
  double sum = 0.0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (i->first < j->first) {
      ++i;
    } else if (j->first < i->first) {
      ++j;
    } else {
      sum += i->second * j->second;
      ++i;
      ++j;
    }
  }
  return sum;
}

double norm(const Embedding& v) {
  double sq = 0.0;
  for (const auto& [_, w] : v) sq += w * w;
  return std::sqrt(sq);
}

double cosine(const Embedding& a, const Embedding& b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  if (a == b) return 1.0;  // avoid 0.9999... for identical text
  return std::clamp(dot(a, b) / (na * nb), 0.0, 1.0);
}

const Embedder& default_embedder() {
  static const TrigramEmbedder embedder;
  return embedder;
}

}  // namespace chatd::query
