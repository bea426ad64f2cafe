#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace chatd::query {

/// Sparse vector: (dimension key, weight) pairs sorted by key, zero weights omitted.
using Embedding = std::vector<std::pair<std::string, double>>;

/// Lowercase character-trigram term frequencies, L2-normalized. Text shorter
/// than three bytes yields the zero vector.
Embedding embed_text(std::string_view text);

double dot(const Embedding& a, const Embedding& b);
double norm(const Embedding& v);

/// Cosine similarity clamped to [0, 1]; 0 when either side is zero.
double cosine(const Embedding& a, const Embedding& b);

/// Embedding backend used for candidate matching. The default is trigram
/// based; a model-backed embedder can be supplied instead.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Embedding embed(std::string_view text) const = 0;
};

class TrigramEmbedder : public Embedder {
 public:
  Embedding embed(std::string_view text) const override { return embed_text(text); }
};

const Embedder& default_embedder();

}  // namespace chatd::query
