#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatd/kg/graph.hpp"
#include "chatd/llm/provider.hpp"
#include "chatd/netmed/algorithms.hpp"

namespace chatd::service {

inline const std::array<std::string, 6> kGroups = {"seed", "diamond_node", "drug", "disorder", "gene", "protein"};

bool is_group(std::string_view group);

struct GroupStyle {
  std::string label;
  std::string color;
  std::string shape;
  bool hidden = false;
};

std::map<std::string, GroupStyle> default_legend();

struct NetworkNode {
  std::string id;
  std::string label;
  std::string group;
  std::string type;  // node type in the graph, used by group-by-type
};

struct NetworkEdge {
  std::string from;
  std::string to;
};

/// Visualization payload in the style of Drugst.One. Nodes and edges always
/// hold the full topology; hidden groups only filter the rendered JSON.
struct NetworkPayload {
  std::vector<NetworkNode> nodes;
  std::vector<NetworkEdge> edges;
  std::map<std::string, GroupStyle> legend = default_legend();
  bool group_by_type = false;

  /// Throws InvalidParams on unknown groups or dangling edge endpoints.
  void validate() const;
  /// FNV-1a over sorted node ids and sorted edges; style never affects it.
  std::string topology_hash() const;

  /// Rendered form: visible "nodes"/"edges", "legend", "hidden" (the
  /// filtered-out part, so the payload round-trips) and "topology_hash".
  nlohmann::json to_json() const;
  static NetworkPayload from_json(const nlohmann::json& doc);
};

/// Module members with their ppi edges. Protein members are labelled with
/// the symbol of the gene encoding them.
NetworkPayload module_payload(const kg::KnowledgeGraph& graph, const netmed::DiseaseModule& module);

/// Seed/module proteins plus the ranked drugs and the target edges joining them.
NetworkPayload ranking_payload(const kg::KnowledgeGraph& graph, const std::vector<std::string>& seeds,
                               const std::vector<std::string>& added, const netmed::RankedDrugList& ranking);

struct StyleOp {
  enum class Kind { kColor, kHide, kShow, kGroupByType } kind = Kind::kColor;
  std::string group;
  std::string color;
};

/// Parses a provider reply: a JSON array of {"op", "group", "color"} objects.
std::optional<std::vector<StyleOp>> parse_style_ops(std::string_view reply);

/// Deterministic mapping of phrases like "hide drugs", "make seeds red" or
/// "group by type".
std::vector<StyleOp> keyword_style_ops(std::string_view instruction);

NetworkPayload apply_style(NetworkPayload payload, const std::vector<StyleOp>& ops);

/// Maps an instruction onto style changes, asking the provider first when
/// one is given and falling back to keywords. An empty instruction returns
/// the payload unchanged.
NetworkPayload restyle(const NetworkPayload& payload, std::string_view instruction, llm::Provider* provider);

}  // namespace chatd::service
