#include "chatd/agents/handlers.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

#include "chatd/netmed/algorithms.hpp"
#include "chatd/prompts.hpp"
#include "chatd/service/network.hpp"

namespace chatd::agents {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out += sep;
    out += p;
  }
  return out;
}

// Proteins are shown under the symbol of the gene encoding them.
std::string label_of(const kg::KnowledgeGraph& graph, const std::string& id) {
  const auto* rec = graph.find(id);
  if (!rec) return id;
  if (rec->type == "protein" && graph.schema().find_edge_type("encodes")) {
    const auto genes = graph.neighbors(id, std::string("encodes"));
    if (!genes.empty()) return graph.node(genes.front()).name;
  }
  return rec->name;
}

std::optional<std::string> lookup(const kg::KnowledgeGraph& graph, const std::string& raw) {
  const auto name = trim(raw);
  if (name.empty()) return std::nullopt;
  if (graph.contains(name)) return name;
  if (graph.contains("entrez." + name)) return "entrez." + name;
  const auto key = lower(name);
  std::optional<std::string> other;
  for (const auto& n : graph.node_records()) {
    bool hit = lower(n.name) == key;
    for (const auto& s : n.synonyms) hit = hit || lower(s) == key;
    if (!hit) continue;
    if (n.type == "gene") return n.id;
    if (!other || n.id < *other) other = n.id;
  }
  return other;
}

void push_unique(std::vector<std::string>& out, std::set<std::string>& seen, const std::string& id) {
  if (seen.insert(id).second) out.push_back(id);
}

std::string artifact_listing(const SessionState& state) {
  if (state.artifacts.empty()) return "(none)";
  std::string out;
  for (const auto& a : state.artifacts) {
    out += a.id + " (" + a.kind + "): " + a.data.value("summary", std::string{}) + "\n";
  }
  return out;
}

json array_schema(std::size_t min_items = 1) {
  return {{"type", "array"}, {"items", {{"type", "string"}}}, {"minItems", min_items}};
}

using ExtraCheck = std::function<std::optional<std::string>(const llm::ToolCall&)>;

// One tool call from the provider. An invalid call is answered with the
// validation error once; a second invalid call is surfaced.
llm::ToolCall request_tool_call(AgentContext& ctx, std::vector<llm::ChatMessage> messages,
                                const std::vector<llm::ToolSchema>& tools, const ExtraCheck& extra = {}) {
  std::string error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto reply = ctx.provider.complete(messages, tools, {});
    error.clear();
    if (!reply.tool_call) {
      error = "no tool call in reply";
    } else {
      auto it = std::find_if(tools.begin(), tools.end(),
                             [&](const llm::ToolSchema& t) { return t.name == reply.tool_call->name; });
      if (it == tools.end()) {
        error = "unknown tool " + reply.tool_call->name;
      } else if (auto bad = llm::validate_arguments(*it, reply.tool_call->arguments)) {
        error = *bad;
      } else if (extra) {
        if (auto bad2 = extra(*reply.tool_call)) error = *bad2;
      }
    }
    if (error.empty()) return *reply.tool_call;
    spdlog::warn("invalid tool call (attempt {}): {}", attempt + 1, error);
    messages.push_back(reply);
    if (reply.tool_call) {
      messages.push_back(llm::ChatMessage::tool_result(reply.tool_call->id, "error: " + error));
    } else {
      messages.push_back(llm::ChatMessage::user("error: " + error + ". Call exactly one of the offered tools."));
    }
  }
  throw Error(ErrorCode::kInvalidToolArguments, error);
}

netmed::DiseaseModule module_from_artifact(const Artifact& a) {
  if (a.kind != "module") throw Error(ErrorCode::kInvalidParams, a.id + " is a " + a.kind + " analysis, not a module");
  netmed::DiseaseModule m;
  for (const auto& id : a.data.at("seeds")) m.seeds.add(id.get<std::string>());
  for (const auto& s : a.data.at("added")) {
    netmed::DiamondStep step;
    step.id = s.at("id").get<std::string>();
    step.iteration = s.value("iter", std::size_t{0});
    step.p_value = s.value("p", 1.0);
    step.links = s.value("k", std::size_t{0});
    step.degree = s.value("degree", std::size_t{0});
    m.added.push_back(std::move(step));
  }
  m.edge_type = a.data.value("edge_type", std::string("ppi"));
  return m;
}

const Artifact& find_module(const SessionState& state, const std::string& id) {
  const auto* a = state.find_artifact(id);
  if (!a) throw Error(ErrorCode::kUnknownAnalysis, id);
  return *a;
}

std::optional<std::string> seeds_xor_module(const llm::ToolCall& call) {
  const bool seeds = call.arguments.contains("seeds");
  const bool module = call.arguments.contains("module");
  if (seeds == module) return std::string("give exactly one of seeds or module");
  return std::nullopt;
}

std::vector<std::string> string_list(const json& arr) {
  std::vector<std::string> out;
  for (const auto& v : arr) out.push_back(v.get<std::string>());
  return out;
}

HandlerResult run_diamond(AgentContext& ctx, const llm::ToolCall& call, ToolCallRecord rec) {
  const auto& graph = ctx.graph();
  const auto t0 = Clock::now();
  netmed::DiseaseModule module;
  try {
    const auto seeds = resolve_seeds(graph, string_list(call.arguments.at("seeds")));
    netmed::DiamondParams params;
    params.n_added = call.arguments.value("n_added", std::size_t{10});
    module = netmed::diamond_expand(graph, netmed::SeedSet(seeds), params);
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
    rec.duration_ms = ms_since(t0);
    ctx.record(std::move(rec));
    throw;
  }
  rec.duration_ms = ms_since(t0);

  std::vector<std::string> seed_labels;
  for (const auto& s : module.seeds.ids()) seed_labels.push_back(label_of(graph, s));
  std::vector<std::string> genes;
  std::set<std::string> seen;
  const auto members = module.members();
  const auto to_gene = graph.translate(members, "gene");
  for (const auto& m : members) {
    const auto it = to_gene.find(m);
    if (it == to_gene.end() || it->second.empty()) {
      push_unique(genes, seen, m);
    } else {
      for (const auto& g : it->second) push_unique(genes, seen, g);
    }
  }
  std::string digest = "DIAMOnD module from " + std::to_string(module.seeds.size()) + " seeds (" +
                       join(seed_labels, ", ") + ") added " + std::to_string(module.added.size()) +
                       " nodes on the " + module.edge_type + " network" + (module.exhausted ? " before running out of candidates" : "") + ".";
  json rows = json::array();
  for (const auto& s : module.added) {
    const auto label = label_of(graph, s.id);
    digest += "\n" + std::to_string(s.iteration) + ". " + label + " (" + s.id + "), p = " + fmt_g(s.p_value) + ", " +
              std::to_string(s.links) + " links to the module";
    rows.push_back({{"id", s.id}, {"name", label}, {"iteration", s.iteration}, {"p", s.p_value}});
  }
  auto data = netmed::to_json(module);
  data["genes"] = genes;
  data["summary"] = std::to_string(module.seeds.size()) + " seeds, " + std::to_string(module.added.size()) + " added";
  const auto payload = service::module_payload(graph, module).to_json();
  const auto& art = ctx.artifact("module", std::move(data), std::optional<json>(payload));
  rec.result_digest = digest;
  rec.rows = rows;
  rec.analysis_id = art.id;
  const auto& stored = ctx.record(std::move(rec));
  ctx.publish(art);
  return {"diamond " + stored.arguments.dump(), "[" + stored.id + "] " + digest};
}

HandlerResult run_ranking(AgentContext& ctx, const llm::ToolCall& call, ToolCallRecord rec) {
  const auto& graph = ctx.graph();
  const auto t0 = Clock::now();
  netmed::RankedDrugList ranking;
  std::vector<std::string> seeds;
  std::vector<std::string> added;
  std::string scope;
  try {
    netmed::RankParams params;
    params.method = call.name == "closeness" ? netmed::RankMethod::kCloseness : netmed::RankMethod::kTrustRank;
    params.top_k = call.arguments.value("top_k", std::size_t{10});
    if (call.arguments.contains("module")) {
      const auto id = call.arguments["module"].get<std::string>();
      const auto module = module_from_artifact(find_module(ctx.state, id));
      seeds = module.seeds.ids();
      for (const auto& s : module.added) added.push_back(s.id);
      scope = "the module of " + id + " (" + std::to_string(seeds.size() + added.size()) + " proteins)";
      ranking = netmed::rank_drugs(graph, module, params);
    } else {
      seeds = resolve_seeds(graph, string_list(call.arguments.at("seeds")));
      scope = std::to_string(seeds.size()) + " seed proteins";
      ranking = netmed::rank_drugs(graph, netmed::SeedSet(seeds), params);
    }
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
    rec.duration_ms = ms_since(t0);
    ctx.record(std::move(rec));
    throw;
  }
  rec.duration_ms = ms_since(t0);

  const std::string method = ranking.method == netmed::RankMethod::kCloseness ? "Closeness" : "TrustRank";
  std::string digest = method + " drug ranking against " + scope + ": ";
  digest += ranking.entries.empty() ? "no drug reaches the module." : std::to_string(ranking.entries.size()) + " drugs.";
  json rows = json::array();
  for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
    const auto& d = ranking.entries[i];
    const auto name = graph.node(d.id).name;
    digest += "\n" + std::to_string(i + 1) + ". " + name + " (" + d.id + "), score " + fmt_g(d.score);
    rows.push_back({{"id", d.id}, {"name", name}, {"rank", i + 1}, {"score", d.score}});
  }
  auto data = netmed::to_json(ranking);
  data["summary"] = method + " ranking of " + std::to_string(ranking.entries.size()) + " drugs";
  const auto payload = service::ranking_payload(graph, seeds, added, ranking).to_json();
  const auto& art = ctx.artifact("ranking", std::move(data), std::optional<json>(payload));
  rec.result_digest = digest;
  rec.rows = rows;
  rec.analysis_id = art.id;
  const auto& stored = ctx.record(std::move(rec));
  ctx.publish(art);
  return {call.name + " " + stored.arguments.dump(), "[" + stored.id + "] " + digest};
}

}  // namespace

std::vector<llm::ToolSchema> nedrex_tools() {
  const json ranking_params = {{"type", "object"},
                               {"properties",
                                {{"seeds", array_schema()},
                                 {"module", {{"type", "string"}}},
                                 {"top_k", {{"type", "integer"}, {"minimum", 1}, {"maximum", 1000}}}}},
                               {"additionalProperties", false}};
  return {
      {"diamond", "Expand seed genes or proteins into a disease module with DIAMOnD.",
       {{"type", "object"},
        {"properties", {{"seeds", array_schema()}, {"n_added", {{"type", "integer"}, {"minimum", 0}, {"maximum", 500}}}}},
        {"required", {"seeds"}},
        {"additionalProperties", false}}},
      {"trustrank", "Rank drugs by TrustRank propagated from seeds or from a module analysis.", ranking_params},
      {"closeness", "Rank drugs by closeness to seeds or to a module analysis.", ranking_params},
  };
}

std::vector<llm::ToolSchema> digest_tools() {
  return {{"digest_set", "Functional coherence and term enrichment of a gene set or module analysis.",
           {{"type", "object"},
            {"properties",
             {{"genes", array_schema(2)},
              {"module", {{"type", "string"}}},
              {"samples", {{"type", "integer"}, {"minimum", 100}, {"maximum", 100000}}},
              {"seed", {{"type", "integer"}, {"minimum", 0}}}}},
            {"additionalProperties", false}}}};
}

std::vector<std::string> resolve_genes(const kg::KnowledgeGraph& graph, const std::vector<std::string>& names) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& name : names) {
    const auto id = lookup(graph, name);
    if (!id) throw Error(ErrorCode::kSeedNotInGraph, name);
    const auto& rec = graph.node(*id);
    if (rec.type == "gene") {
      push_unique(out, seen, *id);
    } else if (rec.type == "protein") {
      const auto genes = graph.translate({*id}, "gene").at(*id);
      if (genes.empty()) throw Error(ErrorCode::kSeedNotInGraph, name + " has no encoding gene");
      for (const auto& g : genes) push_unique(out, seen, g);
    } else {
      throw Error(ErrorCode::kSeedNotInGraph, name + " is a " + rec.type + ", not a gene");
    }
  }
  return out;
}

std::vector<std::string> resolve_seeds(const kg::KnowledgeGraph& graph, const std::vector<std::string>& names) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& name : names) {
    const auto id = lookup(graph, name);
    if (!id) throw Error(ErrorCode::kSeedNotInGraph, name);
    const auto& rec = graph.node(*id);
    if (rec.type == "protein") {
      push_unique(out, seen, *id);
    } else if (rec.type == "gene") {
      const auto proteins = graph.translate({*id}, "protein").at(*id);
      if (proteins.empty()) throw Error(ErrorCode::kSeedNotInGraph, name + " encodes no protein in the graph");
      for (const auto& p : proteins) push_unique(out, seen, p);
    } else {
      throw Error(ErrorCode::kSeedNotInGraph, name + " is a " + rec.type + ", not a gene or protein");
    }
  }
  return out;
}

HandlerResult handle_fetch_kg(AgentContext& ctx) {
  const auto& graph = ctx.graph();
  const auto t0 = Clock::now();
  ToolCallRecord rec;
  rec.agent = "knowledge_graph";
  rec.tool = "kg_query";
  rec.arguments = {{"question", ctx.question}};
  query::KgAnswer answer;
  try {
    answer = query::answer_with_retries(ctx.question, graph, ctx.provider, ctx.config.engine);
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
    rec.duration_ms = ms_since(t0);
    ctx.record(std::move(rec));
    throw;
  }
  rec.duration_ms = ms_since(t0);

  std::string digest;
  json rows = json::array();
  if (const auto* result = std::get_if<query::QueryResult>(&answer.outcome)) {
    rec.arguments["query"] = result->query.text;
    std::vector<std::string> matched;
    for (const auto& cands : result->candidates) {
      if (!cands.empty()) matched.push_back(graph.node(cands.front().id).name);
    }
    const auto& target = result->questions.nodes[result->questions.target].node_type;
    digest = "Knowledge-graph query" + (matched.empty() ? std::string{} : " for " + join(matched, ", ")) +
             " returned " + std::to_string(result->bindings.size()) + " " + target + " nodes.";
    for (const auto& b : result->bindings) {
      digest += "\n" + b.name + " (" + b.id + ")";
      rows.push_back({{"id", b.id}, {"name", b.name}, {"type", b.type}});
    }
  } else {
    const auto& fb = std::get<query::FallbackSummary>(answer.outcome);
    rec.arguments["fallback"] = true;
    digest = "No structured query could be built; answer from graph passages.\n" + fb.condensed;
    for (const auto& p : fb.passages) {
      const auto& n = graph.node(p.source_id);
      rows.push_back({{"id", n.id}, {"name", n.name}, {"type", n.type}});
    }
  }
  auto data = query::to_json(answer);
  data["summary"] = std::to_string(rows.size()) + " rows" + (answer.used_fallback() ? " (fallback)" : "");
  const auto& art = ctx.artifact("kg_result", std::move(data));
  rec.result_digest = digest;
  rec.rows = rows;
  rec.analysis_id = art.id;
  const auto& stored = ctx.record(std::move(rec));
  return {ctx.question, "[" + stored.id + "] " + digest};
}

HandlerResult handle_nedrex(AgentContext& ctx) {
  ctx.graph();
  const auto tools = nedrex_tools();
  const std::vector<llm::ChatMessage> messages = {
      llm::ChatMessage::system(prompts::render_named("nedrex_agent", {{"artifacts", artifact_listing(ctx.state)}})),
      llm::ChatMessage::user(ctx.question)};
  const auto call = request_tool_call(ctx, messages, tools, [](const llm::ToolCall& c) -> std::optional<std::string> {
    if (c.name == "diamond") return std::nullopt;
    return seeds_xor_module(c);
  });
  ToolCallRecord rec;
  rec.agent = "nedrex";
  rec.tool = call.name;
  rec.arguments = call.arguments;
  auto result = call.name == "diamond" ? run_diamond(ctx, call, std::move(rec)) : run_ranking(ctx, call, std::move(rec));
  ctx.state.agent_memory["nedrex"].push_back(result.output_digest);
  return result;
}

HandlerResult handle_digest(AgentContext& ctx) {
  const auto& graph = ctx.graph();
  if (!ctx.resources.annotations) throw Error(ErrorCode::kIo, "no annotation map loaded");
  const auto& ann = *ctx.resources.annotations;
  const auto tools = digest_tools();
  const std::vector<llm::ChatMessage> messages = {
      llm::ChatMessage::system(prompts::render_named("digest_agent", {{"artifacts", artifact_listing(ctx.state)}})),
      llm::ChatMessage::user(ctx.question)};
  const auto call = request_tool_call(ctx, messages, tools, [](const llm::ToolCall& c) -> std::optional<std::string> {
    if (c.arguments.contains("genes") == c.arguments.contains("module")) {
      return std::string("give exactly one of genes or module");
    }
    return std::nullopt;
  });

  ToolCallRecord rec;
  rec.agent = "digest";
  rec.tool = call.name;
  rec.arguments = call.arguments;
  const auto t0 = Clock::now();
  coherence::CoherenceResult result;
  try {
    std::vector<std::string> genes;
    if (call.arguments.contains("module")) {
      const auto& art = find_module(ctx.state, call.arguments["module"].get<std::string>());
      if (art.kind != "module") throw Error(ErrorCode::kInvalidParams, art.id + " is not a module analysis");
      genes = string_list(art.data.at("genes"));
    } else {
      genes = resolve_genes(graph, string_list(call.arguments["genes"]));
    }
    coherence::SamplingOptions opts;
    opts.samples = call.arguments.value("samples", std::size_t{999});
    opts.seed = call.arguments.value("seed", std::uint64_t{42});
    result = coherence::empirical_pvalue(genes, ann, opts);
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
    rec.duration_ms = ms_since(t0);
    ctx.record(std::move(rec));
    throw;
  }
  rec.duration_ms = ms_since(t0);

  const auto name_of = [&](const std::string& id) {
    const auto* n = graph.find(id);
    return n ? n->name : id;
  };
  std::vector<std::string> names;
  for (const auto& g : result.genes) names.push_back(name_of(g));
  std::string digest = "Functional coherence of " + std::to_string(result.genes.size()) + " genes (" + join(names, ", ") +
                       "): score " + fmt_g(result.score) + ", empirical p = " + fmt_g(result.empirical_p) + " over " +
                       std::to_string(result.samples_used) + " random gene sets.";
  json rows = json::array();
  const std::size_t shown = std::min<std::size_t>(result.per_term.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& t = result.per_term[i];
    std::vector<std::string> members;
    for (const auto& m : t.members) members.push_back(name_of(m));
    digest += "\n" + t.name + " (" + t.term + "): " + std::to_string(t.genes_in_set) + " out of " +
              std::to_string(t.set_size) + " genes participate (" + join(members, ", ") + "), p = " + fmt_g(t.p_value);
    rows.push_back({{"term", t.term}, {"name", t.name}, {"k", t.genes_in_set}, {"n", t.set_size}, {"p", t.p_value}});
  }
  auto data = coherence::to_json(result);
  data["plot"] = coherence::plot_data(result.per_term);
  data["summary"] = "coherence p = " + fmt_g(result.empirical_p);
  const auto& art = ctx.artifact("coherence", std::move(data));
  rec.result_digest = digest;
  rec.rows = rows;
  rec.analysis_id = art.id;
  const auto& stored = ctx.record(std::move(rec));
  ctx.state.agent_memory["digest"].push_back(digest);
  return {"digest_set " + stored.arguments.dump(), "[" + stored.id + "] " + digest};
}

HandlerResult handle_research(AgentContext& ctx) {
  const auto decomposition = research::decompose_research_query(ctx.question, ctx.provider);
  const auto& queries = decomposition.queries;
  const auto t0 = Clock::now();
  const auto record_failures = [&](const std::string& why) {
    for (const auto& q : queries) {
      ToolCallRecord rec;
      rec.agent = "research";
      rec.tool = "literature_search";
      rec.arguments = {{"query", q}, {"limit", ctx.config.literature_limit}};
      rec.ok = false;
      rec.error = why;
      rec.duration_ms = ms_since(t0);
      ctx.record(std::move(rec));
    }
  };
  if (!ctx.resources.literature) {
    record_failures("no literature backend configured");
    throw Error(ErrorCode::kBackendUnreachable, "no literature backend configured");
  }
  research::SearchReport report;
  try {
    report = research::search_literature(queries, *ctx.resources.literature, ctx.config.literature_limit, ctx.question);
  } catch (const Error& e) {
    record_failures(e.what());
    throw;
  }
  const double elapsed = ms_since(t0);
  report.degraded = report.degraded || decomposition.degraded;

  auto data = research::to_json(report);
  data["summary"] = std::to_string(report.records.size()) + " papers";
  const auto& art = ctx.artifact("literature", std::move(data));
  const auto art_id = art.id;

  std::string digest = "Literature search issued " + std::to_string(queries.size()) + " queries and found " +
                       std::to_string(report.records.size()) + " papers.";
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    ToolCallRecord rec;
    rec.agent = "research";
    rec.tool = "literature_search";
    rec.arguments = {{"query", queries[i]}, {"limit", ctx.config.literature_limit}};
    rec.duration_ms = elapsed;
    rec.analysis_id = art_id;
    const auto& outcome = report.per_query[i];
    json rows = json::array();
    std::string rec_digest = "Query \"" + queries[i] + "\"";
    if (outcome.error) {
      rec.ok = false;
      rec.error = *outcome.error;
      rec_digest += " failed: " + *outcome.error;
    } else {
      rec_digest += " returned " + std::to_string(outcome.count) + " papers.";
      for (const auto& p : report.records) {
        if (p.query_index != i) continue;
        rows.push_back({{"id", p.id}, {"title", p.title}, {"year", p.year ? json(*p.year) : json(nullptr)}});
        rec_digest += "\n[paper:" + p.id + "] " + p.title + " (" + (p.year ? std::to_string(*p.year) : "n.d.") +
                      (p.venue.empty() ? "" : ", " + p.venue) + ")";
      }
    }
    rec.rows = rows;
    rec.result_digest = rec_digest;
    const auto& stored = ctx.record(std::move(rec));
    ids.push_back(stored.id);
    digest += "\n[" + stored.id + "] " + rec_digest;
  }
  ctx.state.agent_memory["research"].push_back(digest);
  return {"literature " + json(queries).dump(), digest};
}

HandlerResult handle_adjust_network(AgentContext& ctx) {
  static const std::regex kAnalysis(R"(analysis-\d+)");
  Artifact* target = nullptr;
  std::smatch m;
  if (std::regex_search(ctx.question, m, kAnalysis)) {
    for (auto& a : ctx.state.artifacts) {
      if (a.id == m.str()) target = &a;
    }
    if (!target) throw Error(ErrorCode::kUnknownAnalysis, m.str());
    if (!target->network) throw Error(ErrorCode::kUnknownAnalysis, m.str() + " has no network view");
  } else {
    for (auto it = ctx.state.artifacts.rbegin(); it != ctx.state.artifacts.rend() && !target; ++it) {
      if (it->network) target = &*it;
    }
    if (!target) throw Error(ErrorCode::kUnknownAnalysis, "no network analysis in this session");
  }
  const auto t0 = Clock::now();
  const auto before = service::NetworkPayload::from_json(*target->network);
  const auto after = service::restyle(before, ctx.question, &ctx.provider);
  target->network = after.to_json();

  std::vector<std::string> changes;
  for (const auto& [group, style] : after.legend) {
    const auto old = before.legend.find(group);
    if (old == before.legend.end() || old->second.color != style.color) changes.push_back(group + " color " + style.color);
    if (old == before.legend.end() || old->second.hidden != style.hidden) {
      changes.push_back(group + (style.hidden ? " hidden" : " shown"));
    }
  }
  if (after.group_by_type != before.group_by_type) changes.push_back("grouped by type");
  ToolCallRecord rec;
  rec.agent = "network";
  rec.tool = "restyle_network";
  rec.arguments = {{"analysis_id", target->id}, {"instruction", ctx.question}};
  rec.duration_ms = ms_since(t0);
  rec.analysis_id = target->id;
  rec.result_digest = "Restyled the network of " + target->id + ": " +
                      (changes.empty() ? std::string("no style change") : join(changes, ", ")) + ".";
  const auto& stored = ctx.record(std::move(rec));
  ctx.publish(*target);
  return {ctx.question, "[" + stored.id + "] " + stored.result_digest};
}

HandlerResult handle_summary(AgentContext& ctx) {
  const bool done = summarize_memory(ctx.state, ctx.provider, ctx.config.summary_threshold, true);
  return {"conversation", done ? "Conversation condensed: " + ctx.state.rolling_summary : "Summary skipped."};
}

AgentRegistry default_registry() {
  AgentRegistry r;
  r.set(Action::kSummary, handle_summary);
  r.set(Action::kFetchKg, handle_fetch_kg);
  r.set(Action::kCallNedrexTool, handle_nedrex);
  r.set(Action::kCallDigestTool, handle_digest);
  r.set(Action::kFetchResearch, handle_research);
  r.set(Action::kAdjustNetwork, handle_adjust_network);
  return r;
}

}  // namespace chatd::agents
