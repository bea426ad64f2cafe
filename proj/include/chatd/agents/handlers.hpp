#pragma once

#include <string>
#include <vector>

#include "chatd/agents/orchestrator.hpp"
#include "chatd/llm/provider.hpp"

namespace chatd::agents {

/// diamond, trustrank and closeness.
std::vector<llm::ToolSchema> nedrex_tools();
/// digest_set.
std::vector<llm::ToolSchema> digest_tools();

/// Resolves user-facing gene references (node id, bare entrez number, symbol
/// or synonym, case-insensitive) to gene node ids, in input order without
/// duplicates. Throws SeedNotInGraph for the first unresolved name.
std::vector<std::string> resolve_genes(const kg::KnowledgeGraph& graph, const std::vector<std::string>& names);

/// Like resolve_genes, then maps genes onto the proteins they encode.
/// Protein ids and names are accepted directly.
std::vector<std::string> resolve_seeds(const kg::KnowledgeGraph& graph, const std::vector<std::string>& names);

HandlerResult handle_fetch_kg(AgentContext& ctx);
HandlerResult handle_nedrex(AgentContext& ctx);
HandlerResult handle_digest(AgentContext& ctx);
HandlerResult handle_research(AgentContext& ctx);
HandlerResult handle_adjust_network(AgentContext& ctx);
HandlerResult handle_summary(AgentContext& ctx);

/// Registry with every handler above.
AgentRegistry default_registry();

}  // namespace chatd::agents
