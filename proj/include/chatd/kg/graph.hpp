#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "chatd/error.hpp"

namespace chatd::kg {

struct NodeRecord {
  std::string id;    // namespaced, e.g. "entrez.348"
  std::string type;  // declared in the schema
  std::string name;  // display name; equals id when the source had none
  std::vector<std::string> synonyms;
  std::map<std::string, std::string> attrs;
};

struct EdgeRecord {
  std::string source;
  std::string target;
  std::string type;

  friend bool operator==(const EdgeRecord&, const EdgeRecord&) = default;
};

struct EdgeTypeDecl {
  std::string name;
  std::string source_type;
  std::string target_type;
};

/// One hop in the type-level meta-graph: following `edge_type` from some
/// node type leads to `to_type`.
struct MetaHop {
  std::string edge_type;
  std::string to_type;
};

class Schema {
 public:
  Schema() = default;
  Schema(std::vector<std::string> node_types, std::vector<EdgeTypeDecl> edge_types);

  static Schema from_json(const nlohmann::json& doc);
  static Schema load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const std::vector<std::string>& node_types() const { return node_types_; }
  const std::vector<EdgeTypeDecl>& edge_types() const { return edge_types_; }

  bool has_node_type(std::string_view type) const;
  const EdgeTypeDecl* find_edge_type(std::string_view name) const;

  /// Meta-graph adjacency, both directions; hops sorted by (edge_type, to_type).
  const std::vector<MetaHop>& hops_from(std::string_view node_type) const;

  /// True when an edge of `edge_type` may join a node of type a to one of type b
  /// (in either orientation).
  bool admits(std::string_view a, std::string_view edge_type, std::string_view b) const;

 private:
  std::vector<std::string> node_types_;
  std::vector<EdgeTypeDecl> edge_types_;
  std::map<std::string, std::vector<MetaHop>, std::less<>> meta_;
};

struct GraphStats {
  std::size_t nodes = 0;
  std::size_t edges = 0;
  std::map<std::string, std::size_t> nodes_by_type;
  std::map<std::string, std::size_t> edges_by_type;
};

/// Dense-index neighbor entry used by the graph algorithms.
struct Adjacent {
  std::uint32_t node;
  std::uint16_t edge_type;
};

/// Immutable typed property graph. Node ids are namespaced strings; a dense
/// index is kept internally and exposed for the algorithm layer only.
class KnowledgeGraph {
 public:
  static KnowledgeGraph load(const std::filesystem::path& nodes_path,
                             const std::filesystem::path& edges_path, Schema schema);

  /// Validates and indexes in-memory records. Same dedup and error rules as load().
  static KnowledgeGraph from_records(Schema schema, const std::vector<NodeRecord>& nodes,
                                     const std::vector<EdgeRecord>& edges);

  const Schema& schema() const { return schema_; }
  GraphStats stats() const;

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  bool contains(std::string_view id) const;
  const NodeRecord& node(std::string_view id) const;  // throws UnknownNode
  const NodeRecord* find(std::string_view id) const;

  /// All node ids of the given type, sorted.
  std::vector<std::string> nodes_of_type(std::string_view type) const;

  /// Sorted, deduplicated neighbor ids, optionally restricted to one edge type.
  std::vector<std::string> neighbors(std::string_view id,
                                     const std::optional<std::string>& edge_type = std::nullopt) const;

  /// Maps every input id to its neighbors of `target_type` over the edge types
  /// that directly join the two node types. Ids already of target_type map to
  /// themselves.
  std::map<std::string, std::vector<std::string>> translate(const std::vector<std::string>& ids,
                                                            std::string_view target_type) const;

  KnowledgeGraph induced_subgraph(const std::vector<std::string>& ids) const;

  /// Edges in canonical (schema) orientation, sorted by (source, target, type).
  std::vector<EdgeRecord> edges() const;
  const std::vector<NodeRecord>& node_records() const { return nodes_; }

  // Dense-index access.
  std::optional<std::uint32_t> index_of(std::string_view id) const;
  const NodeRecord& at(std::uint32_t index) const { return nodes_[index]; }
  std::span<const Adjacent> adjacent(std::uint32_t index) const { return adjacency_[index]; }
  std::optional<std::uint16_t> edge_type_index(std::string_view name) const;
  const std::string& edge_type_name(std::uint16_t index) const {
    return schema_.edge_types()[index].name;
  }

 private:
  struct DenseEdge {
    std::uint32_t source;
    std::uint32_t target;
    std::uint16_t type;
  };

  KnowledgeGraph() = default;
  static KnowledgeGraph build(Schema schema, const std::vector<NodeRecord>& nodes,
                              const std::vector<std::string>& node_where,
                              const std::vector<EdgeRecord>& edges,
                              const std::vector<std::string>& edge_where);
  void build_adjacency();

  Schema schema_;
  std::vector<NodeRecord> nodes_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<DenseEdge> edges_;
  std::vector<std::vector<Adjacent>> adjacency_;
};

void to_json(nlohmann::json& out, const NodeRecord& node);
void from_json(const nlohmann::json& in, NodeRecord& node);

}  // namespace chatd::kg
