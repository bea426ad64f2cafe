#include "chatd/coherence/digest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "chatd/error.hpp"
#include "chatd/netmed/hypergeometric.hpp"

namespace chatd::coherence {

using nlohmann::json;

AnnotationMap::AnnotationMap(std::vector<Term> terms) : terms_(std::move(terms)) {
  std::vector<std::string> all;
  for (auto& t : terms_) {
    std::sort(t.genes.begin(), t.genes.end());
    t.genes.erase(std::unique(t.genes.begin(), t.genes.end()), t.genes.end());
    if (t.genes.empty()) {
      throw Error(ErrorCode::kInvalidParams, "annotation term '" + t.id + "' has no genes");
    }
    all.insert(all.end(), t.genes.begin(), t.genes.end());
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  background_ = std::move(all);
  gene_terms_.assign(background_.size(), {});
  for (std::uint32_t i = 0; i < background_.size(); ++i) gene_index_.emplace(background_[i], i);
  for (std::uint32_t t = 0; t < terms_.size(); ++t) {
    for (const auto& g : terms_[t].genes) gene_terms_[gene_index_.at(g)].push_back(t);
  }
}

AnnotationMap AnnotationMap::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<Term> terms;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto doc = json::parse(line);
      terms.push_back({doc.at("term").get<std::string>(), doc.value("name", std::string{}),
                       doc.at("genes").get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return AnnotationMap(std::move(terms));
}

bool AnnotationMap::in_background(const std::string& gene) const {
  return gene_index_.count(gene) != 0;
}

std::optional<std::uint32_t> AnnotationMap::background_index(const std::string& gene) const {
  auto it = gene_index_.find(gene);
  if (it == gene_index_.end()) return std::nullopt;
  return it->second;
}

const std::vector<std::uint32_t>& AnnotationMap::terms_of(const std::string& gene) const {
  static const std::vector<std::uint32_t> kNone;
  auto idx = background_index(gene);
  return idx ? gene_terms_[*idx] : kNone;
}

namespace {

double jaccard(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t common = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

// Indices must be sorted so equal sets always sum in the same order.
double coherence_of(const std::vector<std::uint32_t>& sorted_idx, const AnnotationMap& ann) {
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < sorted_idx.size(); ++i) {
    for (std::size_t j = i + 1; j < sorted_idx.size(); ++j) {
      total += jaccard(ann.terms_of_index(sorted_idx[i]), ann.terms_of_index(sorted_idx[j]));
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

std::vector<std::uint32_t> scored_indices(const std::vector<std::string>& genes, const AnnotationMap& ann) {
  std::vector<std::uint32_t> idx;
  for (const auto& g : genes) {
    if (auto i = ann.background_index(g)) {
      idx.push_back(*i);
    } else {
      spdlog::warn("gene '{}' is not in the annotation background; dropped", g);
    }
  }
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
  if (idx.size() < 2) {
    throw Error(ErrorCode::kTooFewGenes,
                std::to_string(idx.size()) + " annotated gene(s) remain; at least 2 are required");
  }
  return idx;
}

}  // namespace

double coherence_score(const std::vector<std::string>& genes, const AnnotationMap& ann) {
  return coherence_of(scored_indices(genes, ann), ann);
}

std::vector<TermEnrichment> term_enrichment(const std::vector<std::string>& genes,
                                            const AnnotationMap& ann) {
  const auto idx = scored_indices(genes, ann);
  std::map<std::uint32_t, std::vector<std::string>> hits;
  for (auto g : idx) {
    for (auto t : ann.terms_of_index(g)) hits[t].push_back(ann.background()[g]);
  }
  const auto n = idx.size();
  const auto big_n = ann.background().size();
  std::vector<TermEnrichment> out;
  for (auto& [t, members] : hits) {
    const auto& term = ann.terms()[t];
    TermEnrichment e;
    e.term = term.id;
    e.name = term.name;
    e.genes_in_set = members.size();
    e.set_size = n;
    e.term_size = term.genes.size();
    e.background = big_n;
    e.p_value = netmed::hypergeometric_tail(static_cast<std::int64_t>(e.genes_in_set),
                                            static_cast<std::int64_t>(e.term_size),
                                            static_cast<std::int64_t>(n),
                                            static_cast<std::int64_t>(big_n));
    e.members = std::move(members);
    out.push_back(std::move(e));
  }
  std::sort(out.begin(), out.end(), [](const TermEnrichment& a, const TermEnrichment& b) {
    if (a.p_value != b.p_value) return a.p_value < b.p_value;
    return a.term < b.term;
  });
  return out;
}

CoherenceResult empirical_pvalue(const std::vector<std::string>& genes, const AnnotationMap& ann,
                                 const SamplingOptions& options) {
  if (options.samples < 100) {
    throw Error(ErrorCode::kInvalidParams, "at least 100 random samples are required");
  }
  const auto idx = scored_indices(genes, ann);
  const auto n = idx.size();
  const auto background = ann.background().size();
  if (static_cast<double>(background) < options.min_background_ratio * static_cast<double>(n)) {
    throw Error(ErrorCode::kBackgroundTooSmall,
                "background of " + std::to_string(background) + " genes for a set of " + std::to_string(n));
  }

  CoherenceResult result;
  result.score = coherence_of(idx, ann);
  result.samples_used = options.samples;
  result.rng_seed = options.seed;
  for (auto i : idx) result.genes.push_back(ann.background()[i]);

  std::mt19937_64 rng(options.seed);
  std::vector<std::uint32_t> pool(background);
  for (std::uint32_t i = 0; i < background; ++i) pool[i] = i;
  std::vector<std::uint32_t> draw(n);
  for (std::size_t s = 0; s < options.samples; ++s) {
    // partial Fisher-Yates: the first n slots become a uniform n-subset
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, background - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    std::copy(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n), draw.begin());
    std::sort(draw.begin(), draw.end());
    if (coherence_of(draw, ann) >= result.score) ++result.exceed_count;
  }
  result.empirical_p = static_cast<double>(1 + result.exceed_count) /
                       static_cast<double>(options.samples + 1);
  result.per_term = term_enrichment(result.genes, ann);
  return result;
}

json to_json(const TermEnrichment& term) {
  return {{"term", term.term}, {"name", term.name}, {"k", term.genes_in_set}, {"n", term.set_size},
          {"K", term.term_size}, {"N", term.background}, {"p", term.p_value}, {"genes", term.members}};
}

json to_json(const CoherenceResult& result) {
  json terms = json::array();
  for (const auto& t : result.per_term) terms.push_back(to_json(t));
  return {{"score", result.score},         {"empirical_p", result.empirical_p},
          {"samples_used", result.samples_used}, {"rng_seed", result.rng_seed},
          {"exceed_count", result.exceed_count}, {"genes", result.genes},
          {"per_term", terms}};
}

json plot_data(const std::vector<TermEnrichment>& terms) {
  json series = json::array();
  for (const auto& t : terms) {
    const double p = std::max(t.p_value, 1e-300);
    series.push_back({{"term", t.term}, {"label", t.name.empty() ? t.term : t.name + " (" + t.term + ")"},
                      {"neg_log10_p", -std::log10(p)}});
  }
  return series;
}

}  // namespace chatd::coherence
