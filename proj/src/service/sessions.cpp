#include "chatd/service/sessions.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "chatd/agents/handlers.hpp"
#include "chatd/service/network.hpp"

namespace chatd::service {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string new_session_id() {
  static std::mutex m;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(m);
  char buf[24];
  std::snprintf(buf, sizeof buf, "s-%016llx", static_cast<unsigned long long>(rng()));
  return buf;
}

void write_json(const fs::path& path, const json& doc) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp);
    out << doc.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

// Clears a busy flag on every exit path.
struct BusyGuard {
  std::atomic<bool>& flag;
  ~BusyGuard() { flag = false; }
};

}  // namespace

std::shared_ptr<const KgBundle> load_kg_bundle(const fs::path& dir, std::string name) {
  auto schema = kg::Schema::load(dir / "schema.json");
  auto bundle = std::make_shared<KgBundle>(
      KgBundle{std::move(name), kg::KnowledgeGraph::load(dir / "nodes.jsonl", dir / "edges.jsonl", std::move(schema)), {}});
  if (fs::exists(dir / "annotations.jsonl")) bundle->annotations = coherence::AnnotationMap::load(dir / "annotations.jsonl");
  const auto stats = bundle->graph.stats();
  spdlog::info("loaded graph '{}' with {} nodes and {} edges", bundle->name, stats.nodes, stats.edges);
  return bundle;
}

std::map<std::string, std::shared_ptr<const KgBundle>> load_kg_dir(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::kIo, "not a directory: " + root.string());
  std::map<std::string, std::shared_ptr<const KgBundle>> out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "schema.json")) {
      const auto name = entry.path().filename().string();
      out.emplace(name, load_kg_bundle(entry.path(), name));
    }
  }
  if (out.empty()) throw Error(ErrorCode::kUnknownKg, "no graph found under " + root.string());
  return out;
}

json SessionInfo::to_json() const {
  return {{"id", id}, {"kg", kg}, {"created", created}, {"updated", updated}, {"turns", turns}};
}

SessionManager::SessionManager(std::map<std::string, std::shared_ptr<const KgBundle>> kgs,
                               std::shared_ptr<llm::Provider> provider,
                               std::shared_ptr<research::SearchBackend> literature, ManagerOptions options)
    : kgs_(std::move(kgs)),
      provider_(std::move(provider)),
      literature_(std::move(literature)),
      options_(std::move(options)),
      registry_(agents::default_registry()) {
  if (!provider_) throw Error(ErrorCode::kInvalidParams, "session manager needs a provider");
  if (options_.persist_dir) {
    fs::create_directories(*options_.persist_dir);
    restore();
  }
}

std::vector<std::string> SessionManager::kg_names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : kgs_) out.push_back(name);
  return out;
}

std::shared_ptr<const KgBundle> SessionManager::kg(const std::string& name) const {
  auto it = kgs_.find(name);
  if (it == kgs_.end()) throw Error(ErrorCode::kUnknownKg, name);
  return it->second;
}

SessionInfo SessionManager::create_session(const std::string& kg_name) {
  const auto name = kg_name.empty() ? options_.default_kg : kg_name;
  if (!kgs_.count(name)) throw Error(ErrorCode::kUnknownKg, name);
  auto s = std::make_shared<Session>();
  s->info.id = new_session_id();
  s->info.kg = name;
  s->info.created = s->info.updated = now_iso();
  s->state.steps_remaining = options_.config.step_budget;
  {
    std::lock_guard lock(mutex_);
    while (sessions_.count(s->info.id)) s->info.id = new_session_id();
    sessions_[s->info.id] = s;
  }
  persist(*s, {});
  return s->info;
}

std::shared_ptr<SessionManager::Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::kUnknownSession, id);
  return it->second;
}

agents::TurnResult SessionManager::post_message(const std::string& id, const std::string& text,
                                                const agents::EventSink& sink) {
  auto s = find(id);
  bool expected = false;
  if (!s->busy.compare_exchange_strong(expected, true)) throw Error(ErrorCode::kSessionBusy, id);
  BusyGuard guard{s->busy};

  const auto bundle = kg(s->info.kg);
  agents::Resources resources{&bundle->graph, &bundle->annotations, literature_.get()};
  // The turn works on a copy so a failed turn leaves the stored state as it was.
  agents::SessionState state;
  {
    std::lock_guard lock(s->mutex);
    state = s->state;
  }
  auto result = agents::run_turn(state, text, registry_, *provider_, resources, options_.config, sink);
  {
    std::lock_guard lock(s->mutex);
    s->state = std::move(state);
    s->info.turns = s->state.turn;
    s->info.updated = now_iso();
  }
  persist(*s, result.events);
  return result;
}

agents::TurnResult SessionManager::run_detached(const std::string& text, const std::string& kg_name,
                                               const agents::EventSink& sink) const {
  const auto bundle = kg(kg_name.empty() ? options_.default_kg : kg_name);
  agents::Resources resources{&bundle->graph, &bundle->annotations, literature_.get()};
  agents::SessionState state;
  state.steps_remaining = options_.config.step_budget;
  return agents::run_turn(state, text, registry_, *provider_, resources, options_.config, sink);
}

json SessionManager::get_network(const std::string& id, const std::string& analysis) const {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  const auto* a = s->state.find_artifact(analysis);
  if (!a || !a->network) throw Error(ErrorCode::kUnknownAnalysis, analysis);
  return *a->network;
}

json SessionManager::restyle_network(const std::string& id, const std::string& analysis, const std::string& instruction) {
  auto s = find(id);
  bool expected = false;
  if (!s->busy.compare_exchange_strong(expected, true)) throw Error(ErrorCode::kSessionBusy, id);
  BusyGuard guard{s->busy};
  json current;
  {
    std::lock_guard lock(s->mutex);
    const auto* a = s->state.find_artifact(analysis);
    if (!a || !a->network) throw Error(ErrorCode::kUnknownAnalysis, analysis);
    current = *a->network;
  }
  const auto styled = restyle(NetworkPayload::from_json(current), instruction, provider_.get()).to_json();
  {
    std::lock_guard lock(s->mutex);
    for (auto& a : s->state.artifacts) {
      if (a.id == analysis) a.network = styled;
    }
    s->info.updated = now_iso();
  }
  persist(*s, {});
  return styled;
}

SessionInfo SessionManager::info(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->info;
}

agents::SessionState SessionManager::snapshot(const std::string& id) const {
  auto s = find(id);
  std::lock_guard lock(s->mutex);
  return s->state;
}

void SessionManager::persist(const Session& s, const std::vector<json>& events) const {
  if (!options_.persist_dir) return;
  const auto dir = *options_.persist_dir / s.info.id;
  fs::create_directories(dir);
  std::lock_guard lock(s.mutex);
  char name[32];
  std::snprintf(name, sizeof name, "turn-%04zu.json", s.state.turn);
  write_json(dir / name, {{"session", s.info.to_json()}, {"state", s.state.to_json()}, {"events", events}});
}

void SessionManager::restore() {
  for (const auto& entry : fs::directory_iterator(*options_.persist_dir)) {
    if (!entry.is_directory()) continue;
    fs::path latest;
    for (const auto& f : fs::directory_iterator(entry.path())) {
      const auto fname = f.path().filename().string();
      if (fname.rfind("turn-", 0) == 0 && f.path().extension() == ".json" && fname > latest.filename().string()) {
        latest = f.path();
      }
    }
    if (latest.empty()) continue;
    try {
      const auto doc = read_json(latest);
      auto s = std::make_shared<Session>();
      const auto& info = doc.at("session");
      s->info.id = info.at("id").get<std::string>();
      s->info.kg = info.value("kg", options_.default_kg);
      s->info.created = info.value("created", std::string{});
      s->info.updated = info.value("updated", std::string{});
      s->state = agents::SessionState::from_json(doc.at("state"));
      s->info.turns = s->state.turn;
      if (!kgs_.count(s->info.kg)) {
        spdlog::warn("skipping session {}: graph '{}' not loaded", s->info.id, s->info.kg);
        continue;
      }
      sessions_[s->info.id] = s;
    } catch (const std::exception& e) {
      spdlog::warn("skipping unreadable session snapshot {}: {}", latest.string(), e.what());
    }
  }
  if (!sessions_.empty()) spdlog::info("restored {} sessions", sessions_.size());
}

}  // namespace chatd::service
