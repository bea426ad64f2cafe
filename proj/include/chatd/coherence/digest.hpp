#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace chatd::coherence {

struct Term {
  std::string id;
  std::string name;
  std::vector<std::string> genes;  // sorted, unique
};

/// Functional annotation map: term id -> gene set, plus the background of
/// every annotated gene.
class AnnotationMap {
 public:
  AnnotationMap() = default;
  explicit AnnotationMap(std::vector<Term> terms);

  /// JSON-lines, one {"term","name","genes":[...]} object per line.
  static AnnotationMap load(const std::filesystem::path& path);

  const std::vector<Term>& terms() const { return terms_; }
  const std::vector<std::string>& background() const { return background_; }  // sorted
  bool in_background(const std::string& gene) const;

  /// Term indices annotating the gene, sorted; empty for unknown genes.
  const std::vector<std::uint32_t>& terms_of(const std::string& gene) const;
  const std::vector<std::uint32_t>& terms_of_index(std::uint32_t background_index) const {
    return gene_terms_[background_index];
  }
  std::optional<std::uint32_t> background_index(const std::string& gene) const;

 private:
  std::vector<Term> terms_;
  std::vector<std::string> background_;
  std::map<std::string, std::uint32_t, std::less<>> gene_index_;
  std::vector<std::vector<std::uint32_t>> gene_terms_;
};

/// Mean pairwise Jaccard similarity of annotation sets. Genes outside the
/// background are dropped with a warning; fewer than two remaining genes is
/// TooFewGenes.
double coherence_score(const std::vector<std::string>& genes, const AnnotationMap& ann);

struct TermEnrichment {
  std::string term;
  std::string name;
  std::size_t genes_in_set = 0;  // k
  std::size_t set_size = 0;      // n
  std::size_t term_size = 0;     // K
  std::size_t background = 0;    // N
  double p_value = 1.0;
  std::vector<std::string> members;  // set genes carrying the term, sorted
};

/// Hypergeometric over-representation for every term hit by the set, sorted
/// by p ascending then term id. Raw tails; no multiple-testing correction.
std::vector<TermEnrichment> term_enrichment(const std::vector<std::string>& genes,
                                            const AnnotationMap& ann);

struct SamplingOptions {
  std::size_t samples = 999;
  std::uint64_t seed = 42;
  /// Minimum |background| / |genes|; below it the null is degenerate.
  double min_background_ratio = 2.0;
};

struct CoherenceResult {
  double score = 0.0;
  double empirical_p = 1.0;
  std::size_t samples_used = 0;
  std::uint64_t rng_seed = 0;
  std::size_t exceed_count = 0;
  std::vector<std::string> genes;  // genes actually scored, sorted
  std::vector<TermEnrichment> per_term;
};

/// Observed coherence against `samples` uniform random same-size subsets of
/// the background. empirical_p = (1 + #{sample >= observed}) / (samples + 1).
CoherenceResult empirical_pvalue(const std::vector<std::string>& genes, const AnnotationMap& ann,
                                 const SamplingOptions& options = {});

nlohmann::json to_json(const CoherenceResult& result);
nlohmann::json to_json(const TermEnrichment& term);

/// Bar-chart series: (term label, -log10 p) in enrichment order.
nlohmann::json plot_data(const std::vector<TermEnrichment>& terms);

}  // namespace chatd::coherence
