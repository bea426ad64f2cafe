#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "chatd/kg/graph.hpp"

namespace chatd::netmed {

/// Insertion-ordered, duplicate-free set of node ids.
class SeedSet {
 public:
  SeedSet() = default;
  SeedSet(std::initializer_list<std::string> ids);
  explicit SeedSet(const std::vector<std::string>& ids);

  void add(const std::string& id);
  bool contains(const std::string& id) const;
  bool empty() const { return ids_.empty(); }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
};

struct DiamondParams {
  std::size_t n_added = 10;
  std::string edge_type = "ppi";
};

struct DiamondStep {
  std::string id;
  std::size_t iteration = 0;  // 1-based
  double p_value = 1.0;
  std::size_t links = 0;      // k: links to the module at selection time
  std::size_t degree = 0;
};

struct DiseaseModule {
  SeedSet seeds;
  std::vector<DiamondStep> added;
  std::string edge_type;
  bool exhausted = false;  // stopped before n_added: no candidate touched the module

  std::vector<std::string> members() const;  // seeds then added, in order
};

/// Relative gap below which two connectivity p-values are treated as tied.
inline constexpr double kDiamondTieTolerance = 1e-12;

/// Iterative module expansion. The network is every node whose type is an
/// endpoint of `params.edge_type`, with adjacency restricted to that edge
/// type. Each iteration adds the candidate with minimal hypergeometric tail;
/// ties go to more links, then to the smaller id.
DiseaseModule diamond_expand(const kg::KnowledgeGraph& graph, const SeedSet& seeds,
                             const DiamondParams& params = {});

struct TrustRankParams {
  double damping = 0.85;
  std::size_t max_iter = 200;
  double tol = 1e-10;
  /// Edge types the walk may use; empty means every edge type.
  std::vector<std::string> edge_types;
};

struct TrustRankResult {
  std::map<std::string, double> scores;  // every graph node
  bool converged = false;
  std::size_t iterations = 0;
  double last_delta = 0.0;
};

/// Damped propagation from a uniform seed prior over the undirected graph.
/// Nodes without usable edges hand their mass back to the prior.
TrustRankResult trustrank(const kg::KnowledgeGraph& graph, const SeedSet& seeds,
                          const TrustRankParams& params = {});

enum class ClosenessMode {
  kSeedRelative,  // sum of 1/dist to the seeds
  kWholeGraph,    // harmonic closeness over every reachable node
};

struct ClosenessParams {
  ClosenessMode mode = ClosenessMode::kSeedRelative;
  std::vector<std::string> edge_types;  // empty: all
};

std::map<std::string, double> closeness_scores(const kg::KnowledgeGraph& graph,
                                               const std::vector<std::string>& candidates,
                                               const SeedSet& seeds,
                                               const ClosenessParams& params = {});

enum class RankMethod { kTrustRank, kCloseness };

std::string to_string(RankMethod method);
std::optional<RankMethod> parse_rank_method(std::string_view text);

struct RankParams {
  RankMethod method = RankMethod::kTrustRank;
  std::optional<std::size_t> top_k;
  std::string drug_type = "drug";
  std::string seed_layer = "protein";
  std::vector<std::string> edge_types = {"ppi", "targets"};
  TrustRankParams trustrank;
};

struct RankedDrug {
  std::string id;
  double score = 0.0;
};

struct RankedDrugList {
  RankMethod method = RankMethod::kTrustRank;
  std::vector<RankedDrug> entries;  // score desc, id asc
  std::vector<std::string> scorer_seeds;
  bool no_drug_nodes = false;
};

/// Scores drugs against the module (seeds plus additions, translated into
/// `seed_layer`) and keeps drugs with a positive score.
RankedDrugList rank_drugs(const kg::KnowledgeGraph& graph, const DiseaseModule& module,
                          const RankParams& params = {});

/// Convenience overload for a plain seed list.
RankedDrugList rank_drugs(const kg::KnowledgeGraph& graph, const SeedSet& seeds,
                          const RankParams& params = {});

nlohmann::json to_json(const DiseaseModule& module);
nlohmann::json to_json(const RankedDrugList& ranking);

}  // namespace chatd::netmed
