#include "chatd/netmed/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "chatd/netmed/hypergeometric.hpp"

namespace chatd::netmed {

using nlohmann::json;

SeedSet::SeedSet(std::initializer_list<std::string> ids) {
  for (const auto& id : ids) add(id);
}

SeedSet::SeedSet(const std::vector<std::string>& ids) {
  for (const auto& id : ids) add(id);
}

void SeedSet::add(const std::string& id) {
  if (!contains(id)) ids_.push_back(id);
}

bool SeedSet::contains(const std::string& id) const {
  return std::find(ids_.begin(), ids_.end(), id) != ids_.end();
}

std::vector<std::string> DiseaseModule::members() const {
  std::vector<std::string> out = seeds.ids();
  for (const auto& step : added) out.push_back(step.id);
  return out;
}

namespace {

/// Unique neighbor lists over a subset of edge types, in dense indices.
std::vector<std::vector<std::uint32_t>> filtered_adjacency(const kg::KnowledgeGraph& graph,
                                                           const std::vector<std::string>& edge_types) {
  std::vector<bool> allowed(graph.schema().edge_types().size(), edge_types.empty());
  for (const auto& name : edge_types) {
    if (auto idx = graph.edge_type_index(name)) allowed[*idx] = true;
  }
  std::vector<std::vector<std::uint32_t>> adj(graph.node_count());
  for (std::uint32_t i = 0; i < graph.node_count(); ++i) {
    auto& list = adj[i];
    for (const auto& a : graph.adjacent(i)) {
      if (allowed[a.edge_type]) list.push_back(a.node);
    }
    // adjacent() is sorted by node, so duplicates from parallel edge types are adjacent
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return adj;
}

std::vector<std::uint32_t> resolve_seeds(const kg::KnowledgeGraph& graph, const SeedSet& seeds) {
  if (seeds.empty()) throw Error(ErrorCode::kEmptySeeds, "seed set is empty");
  std::vector<std::uint32_t> out;
  out.reserve(seeds.size());
  for (const auto& id : seeds.ids()) {
    auto idx = graph.index_of(id);
    if (!idx) throw Error(ErrorCode::kSeedNotInGraph, id);
    out.push_back(*idx);
  }
  return out;
}

std::vector<std::uint32_t> bfs_distances(const std::vector<std::vector<std::uint32_t>>& adj,
                                         std::uint32_t source) {
  constexpr auto kInf = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> dist(adj.size(), kInf);
  std::deque<std::uint32_t> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    for (auto v : adj[u]) {
      if (dist[v] == kInf) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

}  // namespace

// ---------------------------------------------------------------------------
// DIAMOnD

DiseaseModule diamond_expand(const kg::KnowledgeGraph& graph, const SeedSet& seeds,
                             const DiamondParams& params) {
  if (seeds.empty()) throw Error(ErrorCode::kEmptySeeds, "seed set is empty");
  const auto type_idx = graph.edge_type_index(params.edge_type);
  if (!type_idx) throw Error(ErrorCode::kInvalidParams, "unknown edge type '" + params.edge_type + "'");
  const auto& decl = graph.schema().edge_types()[*type_idx];

  const std::size_t n = graph.node_count();
  std::vector<bool> in_network(n, false);
  std::size_t network_size = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto& type = graph.at(i).type;
    if (type == decl.source_type || type == decl.target_type) {
      in_network[i] = true;
      ++network_size;
    }
  }

  std::vector<bool> in_module(n, false);
  for (const auto& id : seeds.ids()) {
    auto idx = graph.index_of(id);
    if (!idx || !in_network[*idx]) {
      throw Error(ErrorCode::kSeedNotInGraph, id + " is not in the " + params.edge_type + " network");
    }
    in_module[*idx] = true;
  }
  if (params.n_added > network_size - seeds.size()) {
    throw Error(ErrorCode::kInvalidParams,
                "n_added=" + std::to_string(params.n_added) + " exceeds the " +
                    std::to_string(network_size - seeds.size()) + " non-seed network nodes");
  }

  std::vector<std::vector<std::uint32_t>> adj(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (const auto& a : graph.adjacent(i)) {
      if (a.edge_type == *type_idx) adj[i].push_back(a.node);
    }
  }

  std::vector<std::size_t> links(n, 0);
  std::set<std::uint32_t> candidates;
  const auto absorb = [&](std::uint32_t v) {
    for (auto u : adj[v]) {
      ++links[u];
      if (!in_module[u]) candidates.insert(u);
    }
  };
  for (std::uint32_t i = 0; i < n; ++i) {
    if (in_module[i]) absorb(i);
  }

  DiseaseModule module;
  module.seeds = seeds;
  module.edge_type = params.edge_type;
  std::size_t module_size = seeds.size();

  for (std::size_t iter = 1; iter <= params.n_added; ++iter) {
    if (candidates.empty()) {
      module.exhausted = true;
      break;
    }
    std::map<std::pair<std::size_t, std::size_t>, double> cache;
    std::vector<std::pair<std::uint32_t, double>> scored;
    scored.reserve(candidates.size());
    double best_p = std::numeric_limits<double>::infinity();
    for (auto c : candidates) {
      const auto key = std::make_pair(links[c], adj[c].size());
      auto it = cache.find(key);
      if (it == cache.end()) {
        it = cache.emplace(key, hypergeometric_tail(static_cast<std::int64_t>(links[c]),
                                                    static_cast<std::int64_t>(module_size),
                                                    static_cast<std::int64_t>(adj[c].size()),
                                                    static_cast<std::int64_t>(network_size)))
                 .first;
      }
      scored.emplace_back(c, it->second);
      best_p = std::min(best_p, it->second);
    }
    const double cutoff = best_p + best_p * kDiamondTieTolerance;
    std::optional<std::uint32_t> chosen;
    for (const auto& [c, p] : scored) {
      if (p > cutoff) continue;
      if (!chosen || links[c] > links[*chosen] ||
          (links[c] == links[*chosen] && graph.at(c).id < graph.at(*chosen).id)) {
        chosen = c;
      }
    }
    const auto v = *chosen;
    module.added.push_back({graph.at(v).id, iter, cache.at({links[v], adj[v].size()}), links[v],
                            adj[v].size()});
    in_module[v] = true;
    candidates.erase(v);
    absorb(v);
    ++module_size;
  }
  return module;
}

// ---------------------------------------------------------------------------
// TrustRank

TrustRankResult trustrank(const kg::KnowledgeGraph& graph, const SeedSet& seeds,
                          const TrustRankParams& params) {
  if (!(params.damping > 0.0 && params.damping < 1.0) || params.tol <= 0.0 || params.max_iter < 1) {
    throw Error(ErrorCode::kInvalidParams, "trustrank parameters out of range");
  }
  const auto seed_idx = resolve_seeds(graph, seeds);
  const auto adj = filtered_adjacency(graph, params.edge_types);
  const std::size_t n = graph.node_count();
  const double alpha = params.damping;

  std::vector<double> prior(n, 0.0);
  for (auto s : seed_idx) prior[s] = 1.0 / static_cast<double>(seed_idx.size());

  std::vector<double> t = prior;
  std::vector<double> next(n);
  TrustRankResult result;
  for (std::size_t iter = 1; iter <= params.max_iter; ++iter) {
    double dangling = 0.0;
    for (std::size_t u = 0; u < n; ++u) {
      if (adj[u].empty()) dangling += t[u];
    }
    for (std::size_t v = 0; v < n; ++v) next[v] = (1.0 - alpha + alpha * dangling) * prior[v];
    for (std::size_t u = 0; u < n; ++u) {
      if (adj[u].empty() || t[u] == 0.0) continue;
      const double share = alpha * t[u] / static_cast<double>(adj[u].size());
      for (auto v : adj[u]) next[v] += share;
    }
    double delta = 0.0;
    for (std::size_t v = 0; v < n; ++v) delta += std::abs(next[v] - t[v]);
    t.swap(next);
    result.iterations = iter;
    result.last_delta = delta;
    if (delta < params.tol) {
      result.converged = true;
      break;
    }
  }
  for (std::uint32_t i = 0; i < n; ++i) result.scores.emplace(graph.at(i).id, t[i]);
  return result;
}

// ---------------------------------------------------------------------------
// Closeness

std::map<std::string, double> closeness_scores(const kg::KnowledgeGraph& graph,
                                               const std::vector<std::string>& candidates,
                                               const SeedSet& seeds,
                                               const ClosenessParams& params) {
  const auto seed_idx = resolve_seeds(graph, seeds);
  std::vector<std::uint32_t> cand_idx;
  cand_idx.reserve(candidates.size());
  for (const auto& id : candidates) {
    auto idx = graph.index_of(id);
    if (!idx) throw Error(ErrorCode::kUnknownNode, id);
    cand_idx.push_back(*idx);
  }
  const auto adj = filtered_adjacency(graph, params.edge_types);
  constexpr auto kInf = std::numeric_limits<std::uint32_t>::max();

  std::vector<double> score(graph.node_count(), 0.0);
  if (params.mode == ClosenessMode::kSeedRelative) {
    for (auto s : seed_idx) {
      const auto dist = bfs_distances(adj, s);
      for (auto c : cand_idx) {
        if (c != s && dist[c] != kInf) score[c] += 1.0 / static_cast<double>(dist[c]);
      }
    }
  } else {
    for (auto c : cand_idx) {
      const auto dist = bfs_distances(adj, c);
      double total = 0.0;
      for (std::size_t v = 0; v < dist.size(); ++v) {
        if (v != c && dist[v] != kInf) total += 1.0 / static_cast<double>(dist[v]);
      }
      score[c] = total;
    }
  }

  std::map<std::string, double> out;
  for (auto c : cand_idx) out[graph.at(c).id] = score[c];
  return out;
}

// ---------------------------------------------------------------------------
// Drug ranking

std::string to_string(RankMethod method) {
  return method == RankMethod::kTrustRank ? "trustrank" : "closeness";
}

std::optional<RankMethod> parse_rank_method(std::string_view text) {
  if (text == "trustrank") return RankMethod::kTrustRank;
  if (text == "closeness") return RankMethod::kCloseness;
  return std::nullopt;
}

RankedDrugList rank_drugs(const kg::KnowledgeGraph& graph, const SeedSet& seeds,
                          const RankParams& params) {
  DiseaseModule module;
  module.seeds = seeds;
  return rank_drugs(graph, module, params);
}

RankedDrugList rank_drugs(const kg::KnowledgeGraph& graph, const DiseaseModule& module,
                          const RankParams& params) {
  RankedDrugList result;
  result.method = params.method;

  const auto members = module.members();
  if (members.empty()) throw Error(ErrorCode::kEmptySeeds, "module has no members");
  SeedSet scorer_seeds;
  const auto translated = graph.translate(members, params.seed_layer);
  for (const auto& id : members) {
    for (const auto& mapped : translated.at(id)) scorer_seeds.add(mapped);
  }
  if (scorer_seeds.empty()) {
    throw Error(ErrorCode::kEmptySeeds, "no module member maps into the " + params.seed_layer + " layer");
  }
  result.scorer_seeds = scorer_seeds.ids();

  const auto drugs = graph.nodes_of_type(params.drug_type);
  if (drugs.empty()) {
    result.no_drug_nodes = true;
    return result;
  }

  std::map<std::string, double> scores;
  if (params.method == RankMethod::kTrustRank) {
    auto tp = params.trustrank;
    tp.edge_types = params.edge_types;
    const auto tr = trustrank(graph, scorer_seeds, tp);
    for (const auto& d : drugs) scores[d] = tr.scores.at(d);
  } else {
    ClosenessParams cp;
    cp.edge_types = params.edge_types;
    scores = closeness_scores(graph, drugs, scorer_seeds, cp);
  }

  for (const auto& [id, score] : scores) {
    if (score > 0.0) result.entries.push_back({id, score});
  }
  std::sort(result.entries.begin(), result.entries.end(), [](const RankedDrug& a, const RankedDrug& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (params.top_k && result.entries.size() > *params.top_k) result.entries.resize(*params.top_k);
  return result;
}

json to_json(const DiseaseModule& module) {
  json added = json::array();
  for (const auto& s : module.added) {
    added.push_back({{"id", s.id}, {"iter", s.iteration}, {"p", s.p_value}, {"k", s.links},
                     {"degree", s.degree}});
  }
  return {{"seeds", module.seeds.ids()}, {"added", added}, {"edge_type", module.edge_type},
          {"exhausted", module.exhausted}};
}

json to_json(const RankedDrugList& ranking) {
  json entries = json::array();
  for (const auto& e : ranking.entries) entries.push_back({{"id", e.id}, {"score", e.score}});
  json out = {{"method", to_string(ranking.method)}, {"entries", entries}};
  if (ranking.no_drug_nodes) out["no_drug_nodes"] = true;
  return out;
}

}  // namespace chatd::netmed
