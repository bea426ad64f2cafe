#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatd/agents/orchestrator.hpp"
#include "chatd/coherence/digest.hpp"
#include "chatd/kg/graph.hpp"
#include "chatd/llm/provider.hpp"
#include "chatd/research/literature.hpp"

namespace chatd::service {

/// A named graph with its functional annotations.
struct KgBundle {
  std::string name;
  kg::KnowledgeGraph graph;
  coherence::AnnotationMap annotations;
};

/// Loads <dir>/{schema.json,nodes.jsonl,edges.jsonl} and, when present,
/// annotations.jsonl.
std::shared_ptr<const KgBundle> load_kg_bundle(const std::filesystem::path& dir, std::string name);

/// Every subdirectory of `root` holding a schema.json, keyed by its name.
std::map<std::string, std::shared_ptr<const KgBundle>> load_kg_dir(const std::filesystem::path& root);

struct SessionInfo {
  std::string id;
  std::string kg;
  std::string created;  // ISO 8601 UTC
  std::string updated;
  std::size_t turns = 0;

  nlohmann::json to_json() const;
};

struct ManagerOptions {
  std::optional<std::filesystem::path> persist_dir;
  agents::OrchestratorConfig config;
  std::string default_kg = "sample";
};

/// Owns sessions, serializes turns per session and persists one JSON
/// snapshot per turn (<persist>/<id>/turn-NNNN.json).
class SessionManager {
 public:
  SessionManager(std::map<std::string, std::shared_ptr<const KgBundle>> kgs, std::shared_ptr<llm::Provider> provider,
                 std::shared_ptr<research::SearchBackend> literature, ManagerOptions options = {});

  /// Throws UnknownKg. An empty name selects the default graph.
  SessionInfo create_session(const std::string& kg = "");

  /// Runs one turn. Throws UnknownSession, or SessionBusy while another turn
  /// of the same session is in flight.
  agents::TurnResult post_message(const std::string& id, const std::string& text, const agents::EventSink& sink = {});

  /// Runs one turn in a throwaway session that is neither stored nor persisted.
  agents::TurnResult run_detached(const std::string& text, const std::string& kg = "",
                                  const agents::EventSink& sink = {}) const;

  /// Rendered payload of an analysis; throws UnknownSession/UnknownAnalysis.
  nlohmann::json get_network(const std::string& id, const std::string& analysis) const;
  nlohmann::json restyle_network(const std::string& id, const std::string& analysis, const std::string& instruction);

  SessionInfo info(const std::string& id) const;
  agents::SessionState snapshot(const std::string& id) const;
  std::vector<std::string> kg_names() const;
  bool has_kg(const std::string& name) const { return kgs_.count(name) > 0; }
  const llm::Provider& provider() const { return *provider_; }
  std::shared_ptr<llm::Provider> provider_handle() const { return provider_; }
  std::shared_ptr<const KgBundle> kg(const std::string& name) const;
  research::SearchBackend* literature() const { return literature_.get(); }
  const ManagerOptions& options() const { return options_; }

 private:
  struct Session {
    SessionInfo info;
    agents::SessionState state;
    mutable std::mutex mutex;  // guards info and state
    std::atomic<bool> busy{false};
  };

  std::shared_ptr<Session> find(const std::string& id) const;
  void persist(const Session& s, const std::vector<nlohmann::json>& events) const;
  void restore();

  std::map<std::string, std::shared_ptr<const KgBundle>> kgs_;
  std::shared_ptr<llm::Provider> provider_;
  std::shared_ptr<research::SearchBackend> literature_;
  ManagerOptions options_;
  agents::AgentRegistry registry_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

}  // namespace chatd::service
