#include "chatd/service/network.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

#include "chatd/prompts.hpp"

namespace chatd::service {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string display_label(const kg::KnowledgeGraph& graph, const std::string& id) {
  const auto& rec = graph.node(id);
  if (rec.type == "protein") {
    // Proteins read better under the symbol of the gene encoding them.
    if (graph.schema().find_edge_type("encodes")) {
      const auto genes = graph.neighbors(id, std::string("encodes"));
      if (!genes.empty()) return graph.node(genes.front()).name;
    }
  }
  return rec.name;
}

void add_edges(const kg::KnowledgeGraph& graph, const std::set<std::string>& members,
               const std::set<std::string>& edge_types, std::vector<NetworkEdge>& out) {
  for (const auto& e : graph.edges()) {
    if (edge_types.count(e.type) && members.count(e.source) && members.count(e.target)) {
      out.push_back({e.source, e.target});
    }
  }
}

const std::map<std::string, std::string>& group_words() {
  static const std::map<std::string, std::string> words = {
      {"seed", "seed"},       {"seeds", "seed"},       {"diamond", "diamond_node"}, {"module", "diamond_node"},
      {"drug", "drug"},       {"drugs", "drug"},       {"disorder", "disorder"},    {"disorders", "disorder"},
      {"disease", "disorder"}, {"diseases", "disorder"}, {"gene", "gene"},          {"genes", "gene"},
      {"protein", "protein"}, {"proteins", "protein"}};
  return words;
}

const std::set<std::string>& color_words() {
  static const std::set<std::string> words = {"red",  "green", "blue", "orange", "purple", "yellow",
                                              "black", "gray", "grey", "pink",  "brown",  "teal",
                                              "cyan", "magenta", "white"};
  return words;
}

std::vector<std::string> words_of(const std::string& clause) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : clause) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '#' || c == '_') {
      cur += c;
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

bool is_group(std::string_view group) {
  return std::find(kGroups.begin(), kGroups.end(), group) != kGroups.end();
}

std::map<std::string, GroupStyle> default_legend() {
  return {{"seed", {"Seed", "#f5a623", "star", false}},
          {"diamond_node", {"Diamond Node", "#4a90e2", "diamond", false}},
          {"drug", {"Drug", "#2ecc71", "diamond", false}},
          {"disorder", {"Disorder", "#9b59b6", "triangle", false}},
          {"gene", {"Gene", "#95a5a6", "circle", false}},
          {"protein", {"Protein", "#7f8c8d", "circle", false}}};
}

void NetworkPayload::validate() const {
  std::set<std::string> ids;
  for (const auto& n : nodes) {
    if (!is_group(n.group)) throw Error(ErrorCode::kInvalidParams, "node " + n.id + " has unknown group " + n.group);
    if (!ids.insert(n.id).second) throw Error(ErrorCode::kInvalidParams, "duplicate node " + n.id);
  }
  for (const auto& e : edges) {
    if (!ids.count(e.from) || !ids.count(e.to)) {
      throw Error(ErrorCode::kInvalidParams, "edge " + e.from + " - " + e.to + " has a missing endpoint");
    }
  }
  for (const auto& [group, _] : legend) {
    if (!is_group(group)) throw Error(ErrorCode::kInvalidParams, "legend has unknown group " + group);
  }
}

std::string NetworkPayload::topology_hash() const {
  std::vector<std::string> parts;
  for (const auto& n : nodes) parts.push_back("n:" + n.id);
  for (const auto& e : edges) {
    const auto& a = std::min(e.from, e.to);
    const auto& b = std::max(e.from, e.to);
    parts.push_back("e:" + a + "|" + b);
  }
  std::sort(parts.begin(), parts.end());
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : parts) {
    for (unsigned char c : p + "\n") {
      h ^= c;
      h *= 1099511628211ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json NetworkPayload::to_json() const {
  const auto effective = [&](const NetworkNode& n) {
    return group_by_type && is_group(n.type) ? n.type : n.group;
  };
  std::set<std::string> hidden_ids;
  json visible_nodes = json::array();
  json hidden_nodes = json::array();
  for (const auto& n : nodes) {
    const auto group = effective(n);
    json item = {{"id", n.id}, {"label", n.label}, {"group", group}, {"type", n.type}};
    if (n.group != group) item["origin_group"] = n.group;
    auto it = legend.find(group);
    if (it != legend.end() && it->second.hidden) {
      hidden_ids.insert(n.id);
      hidden_nodes.push_back(std::move(item));
    } else {
      visible_nodes.push_back(std::move(item));
    }
  }
  json visible_edges = json::array();
  json hidden_edges = json::array();
  for (const auto& e : edges) {
    json item = {{"from", e.from}, {"to", e.to}};
    if (hidden_ids.count(e.from) || hidden_ids.count(e.to)) {
      hidden_edges.push_back(std::move(item));
    } else {
      visible_edges.push_back(std::move(item));
    }
  }
  json leg = json::object();
  for (const auto& [group, style] : legend) {
    leg[group] = {{"label", style.label}, {"color", style.color}, {"shape", style.shape}, {"hidden", style.hidden}};
  }
  return {{"nodes", visible_nodes},
          {"edges", visible_edges},
          {"legend", leg},
          {"group_by_type", group_by_type},
          {"hidden", {{"nodes", hidden_nodes}, {"edges", hidden_edges}}},
          {"topology_hash", topology_hash()}};
}

NetworkPayload NetworkPayload::from_json(const json& doc) {
  NetworkPayload p;
  try {
    const auto read_nodes = [&](const json& list) {
      for (const auto& n : list) {
        p.nodes.push_back({n.at("id").get<std::string>(), n.value("label", std::string{}),
                           n.value("origin_group", n.at("group").get<std::string>()), n.value("type", std::string{})});
      }
    };
    const auto read_edges = [&](const json& list) {
      for (const auto& e : list) p.edges.push_back({e.at("from").get<std::string>(), e.at("to").get<std::string>()});
    };
    read_nodes(doc.at("nodes"));
    read_edges(doc.at("edges"));
    if (auto h = doc.find("hidden"); h != doc.end()) {
      read_nodes(h->value("nodes", json::array()));
      read_edges(h->value("edges", json::array()));
    }
    if (auto l = doc.find("legend"); l != doc.end()) {
      for (const auto& [group, style] : l->items()) {
        p.legend[group] = {style.value("label", group), style.value("color", std::string{}),
                           style.value("shape", std::string{}), style.value("hidden", false)};
      }
    }
    p.group_by_type = doc.value("group_by_type", false);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("network payload: ") + e.what());
  }
  p.validate();
  return p;
}

NetworkPayload module_payload(const kg::KnowledgeGraph& graph, const netmed::DiseaseModule& module) {
  NetworkPayload p;
  std::set<std::string> members;
  for (const auto& id : module.seeds.ids()) {
    p.nodes.push_back({id, display_label(graph, id), "seed", graph.node(id).type});
    members.insert(id);
  }
  for (const auto& step : module.added) {
    p.nodes.push_back({step.id, display_label(graph, step.id), "diamond_node", graph.node(step.id).type});
    members.insert(step.id);
  }
  add_edges(graph, members, {module.edge_type}, p.edges);
  p.validate();
  return p;
}

NetworkPayload ranking_payload(const kg::KnowledgeGraph& graph, const std::vector<std::string>& seeds,
                               const std::vector<std::string>& added, const netmed::RankedDrugList& ranking) {
  NetworkPayload p;
  std::set<std::string> members;
  const auto add = [&](const std::string& id, const char* group) {
    if (!members.insert(id).second) return;
    p.nodes.push_back({id, display_label(graph, id), group, graph.node(id).type});
  };
  for (const auto& id : seeds) add(id, "seed");
  for (const auto& id : added) add(id, "diamond_node");
  for (const auto& d : ranking.entries) add(d.id, "drug");
  std::set<std::string> types;
  for (const auto& t : graph.schema().edge_types()) types.insert(t.name);
  add_edges(graph, members, types, p.edges);
  p.validate();
  return p;
}

std::optional<std::vector<StyleOp>> parse_style_ops(std::string_view reply) {
  const auto open = reply.find('[');
  const auto close = reply.rfind(']');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) return std::nullopt;
  json doc;
  try {
    doc = json::parse(reply.substr(open, close - open + 1));
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
  std::vector<StyleOp> ops;
  for (const auto& item : doc) {
    if (!item.is_object()) return std::nullopt;
    const auto op = item.value("op", std::string{});
    StyleOp s;
    if (op == "group_by_type") {
      s.kind = StyleOp::Kind::kGroupByType;
    } else {
      s.group = item.value("group", std::string{});
      if (!is_group(s.group)) return std::nullopt;
      if (op == "hide") {
        s.kind = StyleOp::Kind::kHide;
      } else if (op == "show") {
        s.kind = StyleOp::Kind::kShow;
      } else if (op == "color") {
        s.kind = StyleOp::Kind::kColor;
        s.color = item.value("color", std::string{});
        if (s.color.empty()) return std::nullopt;
      } else {
        return std::nullopt;
      }
    }
    ops.push_back(std::move(s));
  }
  return ops;
}

std::vector<StyleOp> keyword_style_ops(std::string_view instruction) {
  static const std::regex kSplit(R"(\s+and\s+|\s+then\s+|[,;.]\s*)");
  static const std::regex kGroupByType(R"(\bgroup(ed|ing)?\b.*\bby\s+(node\s+)?(type|kind)\b)");
  static const std::regex kHex(R"(^#[0-9a-f]{3}([0-9a-f]{3})?$)");
  const auto text = lower(instruction);
  std::vector<StyleOp> ops;
  std::vector<std::string> pending;
  std::optional<StyleOp::Kind> last_verb;
  std::string last_color;

  const auto emit = [&](StyleOp::Kind kind, const std::vector<std::string>& groups, const std::string& color) {
    for (const auto& g : groups) ops.push_back({kind, g, kind == StyleOp::Kind::kColor ? color : ""});
  };
  for (std::sregex_token_iterator it(text.begin(), text.end(), kSplit, -1), end; it != end; ++it) {
    const std::string clause = *it;
    if (std::regex_search(clause, kGroupByType)) {
      ops.push_back({StyleOp::Kind::kGroupByType, "", ""});
      continue;
    }
    std::vector<std::string> groups = pending;
    std::optional<StyleOp::Kind> verb;
    std::string color;
    const auto words = words_of(clause);
    for (const auto& w : words) {
      if (auto g = group_words().find(w); g != group_words().end()) {
        if (std::find(groups.begin(), groups.end(), g->second) == groups.end()) groups.push_back(g->second);
      } else if (w == "hide" || w == "remove" || w == "without") {
        verb = StyleOp::Kind::kHide;
      } else if (w == "show" || w == "unhide" || w == "display" || w == "restore") {
        verb = StyleOp::Kind::kShow;
      } else if (color.empty() && (color_words().count(w) || std::regex_match(w, kHex))) {
        color = w == "grey" ? "gray" : w;
      }
    }
    if (!color.empty()) verb = StyleOp::Kind::kColor;
    if (!verb) {
      pending = groups;
      continue;
    }
    emit(*verb, groups, color);
    pending.clear();
    last_verb = verb;
    last_color = color;
  }
  if (!pending.empty() && last_verb) emit(*last_verb, pending, last_color);
  return ops;
}

NetworkPayload apply_style(NetworkPayload payload, const std::vector<StyleOp>& ops) {
  for (const auto& op : ops) {
    switch (op.kind) {
      case StyleOp::Kind::kGroupByType:
        payload.group_by_type = true;
        break;
      case StyleOp::Kind::kHide:
        payload.legend[op.group].hidden = true;
        break;
      case StyleOp::Kind::kShow:
        payload.legend[op.group].hidden = false;
        break;
      case StyleOp::Kind::kColor:
        payload.legend[op.group].color = op.color;
        break;
    }
  }
  return payload;
}

NetworkPayload restyle(const NetworkPayload& payload, std::string_view instruction, llm::Provider* provider) {
  if (instruction.find_first_not_of(" \t\r\n") == std::string_view::npos) return payload;
  if (provider) {
    std::string groups;
    for (const auto& g : kGroups) groups += (groups.empty() ? "" : ", ") + g;
    try {
      const auto reply = provider->complete(
          {llm::ChatMessage::system(prompts::render_named("network_agent", {{"groups", groups}})),
           llm::ChatMessage::user(std::string(instruction))},
          {}, {});
      if (auto ops = parse_style_ops(reply.content)) return apply_style(payload, *ops);
      spdlog::warn("style reply not understood; using keyword rules");
    } catch (const Error& e) {
      if (!e.is_provider_error()) throw;
      spdlog::warn("style provider failed ({}); using keyword rules", e.what());
    }
  }
  return apply_style(payload, keyword_style_ops(instruction));
}

}  // namespace chatd::service
