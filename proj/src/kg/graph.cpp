#include "chatd/kg/graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace chatd::kg {

using nlohmann::json;

namespace {

std::string require_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(ErrorCode::kParseError, where + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

std::string location(const std::string& file, std::size_t line) {
  return file + ":" + std::to_string(line);
}

template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + path.string());
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kParseError, location(path.string(), line_no) + ": " + e.what());
    }
    if (!doc.is_object()) {
      throw Error(ErrorCode::kParseError, location(path.string(), line_no) + ": expected object");
    }
    fn(doc, line_no);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Schema

Schema::Schema(std::vector<std::string> node_types, std::vector<EdgeTypeDecl> edge_types)
    : node_types_(std::move(node_types)), edge_types_(std::move(edge_types)) {
  std::set<std::string> seen_types;
  for (const auto& t : node_types_) {
    if (!seen_types.insert(t).second) {
      throw Error(ErrorCode::kSchemaViolation, "duplicate node type '" + t + "'");
    }
  }
  std::set<std::string> seen_names;
  std::set<std::tuple<std::string, std::string, std::string>> seen_triples;
  for (const auto& e : edge_types_) {
    if (!has_node_type(e.source_type) || !has_node_type(e.target_type)) {
      throw Error(ErrorCode::kSchemaViolation,
                  "edge type '" + e.name + "' references an undeclared node type");
    }
    if (!seen_names.insert(e.name).second) {
      throw Error(ErrorCode::kSchemaViolation, "duplicate edge type '" + e.name + "'");
    }
    if (!seen_triples.emplace(e.name, e.source_type, e.target_type).second) {
      throw Error(ErrorCode::kSchemaViolation, "duplicate edge-type triple '" + e.name + "'");
    }
    meta_[e.source_type].push_back({e.name, e.target_type});
    if (e.source_type != e.target_type) {
      meta_[e.target_type].push_back({e.name, e.source_type});
    }
  }
  for (auto& [type, hops] : meta_) {
    std::sort(hops.begin(), hops.end(), [](const MetaHop& a, const MetaHop& b) {
      return std::tie(a.edge_type, a.to_type) < std::tie(b.edge_type, b.to_type);
    });
  }
}

Schema Schema::from_json(const json& doc) {
  std::vector<std::string> node_types;
  std::vector<EdgeTypeDecl> edge_types;
  try {
    node_types = doc.at("node_types").get<std::vector<std::string>>();
    for (const auto& e : doc.at("edge_types")) {
      if (e.is_array()) {
        edge_types.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>(),
                              e.at(2).get<std::string>()});
      } else {
        edge_types.push_back({e.at("name").get<std::string>(), e.at("source").get<std::string>(),
                              e.at("target").get<std::string>()});
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("schema: ") + e.what());
  }
  return Schema(std::move(node_types), std::move(edge_types));
}

Schema Schema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  return from_json(doc);
}

json Schema::to_json() const {
  json edges = json::array();
  for (const auto& e : edge_types_) {
    edges.push_back({{"name", e.name}, {"source", e.source_type}, {"target", e.target_type}});
  }
  return {{"node_types", node_types_}, {"edge_types", edges}};
}

bool Schema::has_node_type(std::string_view type) const {
  return std::find(node_types_.begin(), node_types_.end(), type) != node_types_.end();
}

const EdgeTypeDecl* Schema::find_edge_type(std::string_view name) const {
  for (const auto& e : edge_types_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const std::vector<MetaHop>& Schema::hops_from(std::string_view node_type) const {
  static const std::vector<MetaHop> kNone;
  auto it = meta_.find(node_type);
  return it == meta_.end() ? kNone : it->second;
}

bool Schema::admits(std::string_view a, std::string_view edge_type, std::string_view b) const {
  const auto* decl = find_edge_type(edge_type);
  if (decl == nullptr) return false;
  return (decl->source_type == a && decl->target_type == b) ||
         (decl->source_type == b && decl->target_type == a);
}

// ---------------------------------------------------------------------------
// KnowledgeGraph

KnowledgeGraph KnowledgeGraph::from_records(Schema schema, const std::vector<NodeRecord>& nodes,
                                            const std::vector<EdgeRecord>& edges) {
  std::vector<std::string> node_where;
  std::vector<std::string> edge_where;
  node_where.reserve(nodes.size());
  edge_where.reserve(edges.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) node_where.push_back("node record " + std::to_string(i + 1));
  for (std::size_t i = 0; i < edges.size(); ++i) edge_where.push_back("edge record " + std::to_string(i + 1));
  return build(std::move(schema), nodes, node_where, edges, edge_where);
}

KnowledgeGraph KnowledgeGraph::load(const std::filesystem::path& nodes_path,
                                    const std::filesystem::path& edges_path, Schema schema) {
  std::vector<NodeRecord> nodes;
  std::vector<std::string> node_where;
  for_each_jsonl(nodes_path, [&](const json& doc, std::size_t line) {
    const auto where = location(nodes_path.string(), line);
    NodeRecord rec;
    rec.id = require_string(doc, "id", where);
    rec.type = require_string(doc, "type", where);
    try {
      rec.name = doc.value("name", std::string{});
      if (auto it = doc.find("synonyms"); it != doc.end()) rec.synonyms = it->get<std::vector<std::string>>();
      if (auto it = doc.find("attrs"); it != doc.end()) {
        for (const auto& [k, v] : it->items()) {
          rec.attrs[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError, where + ": " + e.what());
    }
    nodes.push_back(std::move(rec));
    node_where.push_back(where);
  });

  std::vector<EdgeRecord> edges;
  std::vector<std::string> edge_where;
  for_each_jsonl(edges_path, [&](const json& doc, std::size_t line) {
    const auto where = location(edges_path.string(), line);
    edges.push_back({require_string(doc, "source", where), require_string(doc, "target", where),
                     require_string(doc, "type", where)});
    edge_where.push_back(where);
  });
  return build(std::move(schema), nodes, node_where, edges, edge_where);
}

KnowledgeGraph KnowledgeGraph::build(Schema schema, const std::vector<NodeRecord>& nodes,
                                     const std::vector<std::string>& node_where,
                                     const std::vector<EdgeRecord>& edges,
                                     const std::vector<std::string>& edge_where) {
  KnowledgeGraph g;
  g.schema_ = std::move(schema);
  g.nodes_.reserve(nodes.size());

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& rec = nodes[i];
    if (rec.id.empty()) {
      throw Error(ErrorCode::kParseError, node_where[i] + ": empty node id");
    }
    if (!g.schema_.has_node_type(rec.type)) {
      throw Error(ErrorCode::kSchemaViolation,
                  node_where[i] + ": unknown node type '" + rec.type + "'");
    }
    if (g.index_.count(rec.id) != 0) {
      spdlog::warn("{}: duplicate node id '{}' ignored (first occurrence kept)", node_where[i], rec.id);
      continue;
    }
    g.index_.emplace(rec.id, static_cast<std::uint32_t>(g.nodes_.size()));
    g.nodes_.push_back(rec);
    if (g.nodes_.back().name.empty()) g.nodes_.back().name = rec.id;
  }

  std::set<std::tuple<std::uint32_t, std::uint32_t, std::uint16_t>> seen;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    auto type_idx = g.edge_type_index(e.type);
    if (!type_idx) {
      throw Error(ErrorCode::kSchemaViolation, edge_where[i] + ": unknown edge type '" + e.type + "'");
    }
    auto s = g.index_of(e.source);
    auto t = g.index_of(e.target);
    if (!s || !t) {
      throw Error(ErrorCode::kDanglingEdge,
                  edge_where[i] + ": endpoint '" + (!s ? e.source : e.target) + "' not in graph");
    }
    const auto& decl = g.schema_.edge_types()[*type_idx];
    const auto& st = g.nodes_[*s].type;
    const auto& tt = g.nodes_[*t].type;
    std::uint32_t a = *s;
    std::uint32_t b = *t;
    if (st == decl.source_type && tt == decl.target_type) {
      // declared orientation
    } else if (st == decl.target_type && tt == decl.source_type) {
      std::swap(a, b);
    } else {
      throw Error(ErrorCode::kSchemaViolation, edge_where[i] + ": (" + st + ", " + e.type + ", " +
                                                   tt + ") is not declared in the schema");
    }
    if (a == b) {
      spdlog::warn("{}: self-loop on '{}' ignored", edge_where[i], e.source);
      continue;
    }
    if (decl.source_type == decl.target_type && g.nodes_[a].id > g.nodes_[b].id) {
      std::swap(a, b);
    }
    if (!seen.emplace(a, b, *type_idx).second) {
      spdlog::debug("{}: duplicate edge dropped", edge_where[i]);
      continue;
    }
    g.edges_.push_back({a, b, *type_idx});
  }
  g.build_adjacency();
  return g;
}

void KnowledgeGraph::build_adjacency() {
  adjacency_.assign(nodes_.size(), {});
  for (const auto& e : edges_) {
    adjacency_[e.source].push_back({e.target, e.type});
    adjacency_[e.target].push_back({e.source, e.type});
  }
  for (auto& list : adjacency_) {
    std::sort(list.begin(), list.end(), [](const Adjacent& x, const Adjacent& y) {
      return std::tie(x.node, x.edge_type) < std::tie(y.node, y.edge_type);
    });
  }
}

GraphStats KnowledgeGraph::stats() const {
  GraphStats s;
  s.nodes = nodes_.size();
  s.edges = edges_.size();
  for (const auto& n : nodes_) ++s.nodes_by_type[n.type];
  for (const auto& e : edges_) ++s.edges_by_type[edge_type_name(e.type)];
  return s;
}

std::optional<std::uint32_t> KnowledgeGraph::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::uint16_t> KnowledgeGraph::edge_type_index(std::string_view name) const {
  const auto& types = schema_.edge_types();
  for (std::size_t i = 0; i < types.size(); ++i) {
    if (types[i].name == name) return static_cast<std::uint16_t>(i);
  }
  return std::nullopt;
}

bool KnowledgeGraph::contains(std::string_view id) const { return index_of(id).has_value(); }

const NodeRecord* KnowledgeGraph::find(std::string_view id) const {
  auto idx = index_of(id);
  return idx ? &nodes_[*idx] : nullptr;
}

const NodeRecord& KnowledgeGraph::node(std::string_view id) const {
  const auto* rec = find(id);
  if (rec == nullptr) throw Error(ErrorCode::kUnknownNode, std::string(id));
  return *rec;
}

std::vector<std::string> KnowledgeGraph::nodes_of_type(std::string_view type) const {
  std::vector<std::string> out;
  for (const auto& n : nodes_) {
    if (n.type == type) out.push_back(n.id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> KnowledgeGraph::neighbors(std::string_view id,
                                                   const std::optional<std::string>& edge_type) const {
  auto idx = index_of(id);
  if (!idx) throw Error(ErrorCode::kUnknownNode, std::string(id));
  std::optional<std::uint16_t> filter;
  if (edge_type) {
    filter = edge_type_index(*edge_type);
    if (!filter) return {};
  }
  std::vector<std::string> out;
  for (const auto& adj : adjacency_[*idx]) {
    if (filter && adj.edge_type != *filter) continue;
    out.push_back(nodes_[adj.node].id);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::map<std::string, std::vector<std::string>> KnowledgeGraph::translate(
    const std::vector<std::string>& ids, std::string_view target_type) const {
  if (!schema_.has_node_type(target_type)) {
    throw Error(ErrorCode::kUnknownType, std::string(target_type));
  }
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& id : ids) {
    auto idx = index_of(id);
    if (!idx) throw Error(ErrorCode::kUnknownNode, id);
    const auto& source_type = nodes_[*idx].type;
    auto& mapped = out[id];
    if (source_type == target_type) {
      mapped = {id};
      continue;
    }
    for (const auto& adj : adjacency_[*idx]) {
      const auto& nb = nodes_[adj.node];
      if (nb.type == target_type && schema_.admits(source_type, edge_type_name(adj.edge_type), target_type)) {
        mapped.push_back(nb.id);
      }
    }
    std::sort(mapped.begin(), mapped.end());
    mapped.erase(std::unique(mapped.begin(), mapped.end()), mapped.end());
  }
  return out;
}

KnowledgeGraph KnowledgeGraph::induced_subgraph(const std::vector<std::string>& ids) const {
  std::vector<bool> keep(nodes_.size(), false);
  for (const auto& id : ids) {
    auto idx = index_of(id);
    if (!idx) throw Error(ErrorCode::kUnknownNode, id);
    keep[*idx] = true;
  }
  KnowledgeGraph g;
  g.schema_ = schema_;
  std::vector<std::uint32_t> remap(nodes_.size(), 0);
  for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
    if (!keep[i]) continue;
    remap[i] = static_cast<std::uint32_t>(g.nodes_.size());
    g.index_.emplace(nodes_[i].id, remap[i]);
    g.nodes_.push_back(nodes_[i]);
  }
  for (const auto& e : edges_) {
    if (keep[e.source] && keep[e.target]) {
      g.edges_.push_back({remap[e.source], remap[e.target], e.type});
    }
  }
  g.build_adjacency();
  return g;
}

std::vector<EdgeRecord> KnowledgeGraph::edges() const {
  std::vector<EdgeRecord> out;
  out.reserve(edges_.size());
  for (const auto& e : edges_) {
    out.push_back({nodes_[e.source].id, nodes_[e.target].id, edge_type_name(e.type)});
  }
  std::sort(out.begin(), out.end(), [](const EdgeRecord& a, const EdgeRecord& b) {
    return std::tie(a.source, a.target, a.type) < std::tie(b.source, b.target, b.type);
  });
  return out;
}

void to_json(json& out, const NodeRecord& node) {
  out = {{"id", node.id}, {"type", node.type}, {"name", node.name},
         {"synonyms", node.synonyms}, {"attrs", node.attrs}};
}

void from_json(const json& in, NodeRecord& node) {
  node.id = in.at("id").get<std::string>();
  node.type = in.at("type").get<std::string>();
  node.name = in.value("name", std::string{});
  node.synonyms = in.value("synonyms", std::vector<std::string>{});
  node.attrs = in.value("attrs", std::map<std::string, std::string>{});
}

}  // namespace chatd::kg
