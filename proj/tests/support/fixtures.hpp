#pragma once
// Bundled data access shared by the test binaries.

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chatd/llm/scripted.hpp"
#include "chatd/paths.hpp"
#include "chatd/research/literature.hpp"
#include "chatd/service/sessions.hpp"

namespace fixtures {

inline std::filesystem::path data(const std::string& rel) { return chatd::data_dir() / rel; }

/// The bundled sample graph with its annotations, loaded once per process.
inline std::shared_ptr<const chatd::service::KgBundle> sample() {
  static const auto bundle = chatd::service::load_kg_bundle(data("kg/sample"), "sample");
  return bundle;
}

inline std::vector<std::string> lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

inline std::shared_ptr<chatd::llm::ScriptedProvider> script(const std::string& name) {
  return std::make_shared<chatd::llm::ScriptedProvider>(chatd::llm::load_script(data("scripts/" + name + ".json")));
}

inline std::shared_ptr<chatd::research::SearchBackend> literature() {
  return std::make_shared<chatd::research::FixtureSearchBackend>(data("literature"));
}

/// A manager over the sample graph driven by one script.
inline std::unique_ptr<chatd::service::SessionManager> manager(std::shared_ptr<chatd::llm::Provider> provider,
                                                               chatd::service::ManagerOptions options = {}) {
  std::map<std::string, std::shared_ptr<const chatd::service::KgBundle>> kgs{{"sample", sample()}};
  return std::make_unique<chatd::service::SessionManager>(std::move(kgs), std::move(provider), literature(),
                                                          std::move(options));
}

/// Plan actions from a list of events, in order.
inline std::vector<std::string> plan_actions(const std::vector<nlohmann::json>& events) {
  std::vector<std::string> out;
  for (const auto& e : events) {
    if (e.at("type") == "plan_step") out.push_back(e.at("action").get<std::string>());
  }
  return out;
}

/// Serialized event stream of one replayed script turn in a fresh session.
inline std::string replay(const std::string& script_name, const std::string& message) {
  auto m = manager(script(script_name));
  const auto session = m->create_session();
  std::string out;
  m->post_message(session.id, message, [&](const nlohmann::json& e) { out += e.dump() + "\n"; });
  return out;
}

}  // namespace fixtures
