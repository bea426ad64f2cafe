// chatd: network-medicine research assistant service and command-line tools.

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "chatd/agents/handlers.hpp"
#include "chatd/coherence/digest.hpp"
#include "chatd/eval/evalkit.hpp"
#include "chatd/llm/http_provider.hpp"
#include "chatd/llm/scripted.hpp"
#include "chatd/netmed/algorithms.hpp"
#include "chatd/paths.hpp"
#include "chatd/query/engine.hpp"
#include "chatd/research/literature.hpp"
#include "chatd/service/server.hpp"
#include "chatd/service/sessions.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace chatd;

namespace {

struct Common {
  std::string kg_dir = (data_dir() / "kg").string();
  std::string kg = "sample";
  std::string provider = "http";     // "http" or a script file path
  std::string literature = "fixtures";  // "fixtures", "live" or a fixture directory
  std::string log_level = "warn";
};

// "http" talks to an OpenAI-compatible server; anything else is a script file.
std::shared_ptr<llm::Provider> make_provider(const std::string& spec) {
  if (spec == "http") return std::make_shared<llm::HttpProvider>(llm::HttpProviderConfig::from_env());
  return std::make_shared<llm::ScriptedProvider>(llm::load_script(spec));
}

std::shared_ptr<research::SearchBackend> make_literature(const std::string& spec) {
  if (spec == "live") return std::make_shared<research::HttpSearchBackend>(research::HttpSearchConfig::from_env());
  if (spec == "fixtures") return std::make_shared<research::FixtureSearchBackend>(data_dir() / "literature");
  return std::make_shared<research::FixtureSearchBackend>(spec);
}

std::shared_ptr<const service::KgBundle> load_one(const Common& c) {
  return service::load_kg_bundle(fs::path(c.kg_dir) / c.kg, c.kg);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return json::parse(in);
}

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int cmd_serve(const Common& c, const std::string& listen, const std::string& persist_dir) {
  service::ManagerOptions options;
  options.default_kg = c.kg;
  if (!persist_dir.empty()) options.persist_dir = persist_dir;
  service::SessionManager manager(service::load_kg_dir(c.kg_dir), make_provider(c.provider),
                                  make_literature(c.literature), options);
  service::Server server(manager, service::parse_listen(listen));
  server.start();
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "chatd listening on port " << server.port() << std::endl;
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return 0;
}

int cmd_diamond(const Common& c, const std::vector<std::string>& seeds, std::size_t n, const std::string& edge_type) {
  const auto bundle = load_one(c);
  const auto ids = agents::resolve_seeds(bundle->graph, seeds);
  const auto module = netmed::diamond_expand(bundle->graph, netmed::SeedSet(ids), {n, edge_type});
  std::cout << netmed::to_json(module).dump(2) << '\n';
  return 0;
}

int cmd_rank(const Common& c, const std::vector<std::string>& seeds, const std::string& method,
             std::optional<std::size_t> top_k) {
  const auto bundle = load_one(c);
  netmed::RankParams params;
  const auto m = netmed::parse_rank_method(method);
  if (!m) throw Error(ErrorCode::kInvalidParams, "unknown method " + method);
  params.method = *m;
  params.top_k = top_k;
  const auto ids = agents::resolve_seeds(bundle->graph, seeds);
  std::cout << netmed::to_json(netmed::rank_drugs(bundle->graph, netmed::SeedSet(ids), params)).dump(2) << '\n';
  return 0;
}

int cmd_coherence(const Common& c, const std::vector<std::string>& genes, std::size_t samples, std::uint64_t seed) {
  const auto bundle = load_one(c);
  const auto ids = agents::resolve_genes(bundle->graph, genes);
  coherence::SamplingOptions options;
  options.samples = samples;
  options.seed = seed;
  std::cout << coherence::to_json(coherence::empirical_pvalue(ids, bundle->annotations, options)).dump(2) << '\n';
  return 0;
}

int cmd_query(const Common& c, const std::string& question) {
  const auto bundle = load_one(c);
  auto provider = make_provider(c.provider);
  std::cout << query::to_json(query::answer_with_retries(question, bundle->graph, *provider)).dump(2) << '\n';
  return 0;
}

int cmd_replay(const Common& c, const std::vector<std::string>& messages) {
  service::ManagerOptions options;
  options.default_kg = c.kg;
  std::map<std::string, std::shared_ptr<const service::KgBundle>> kgs{{c.kg, load_one(c)}};
  service::SessionManager manager(std::move(kgs), make_provider(c.provider), make_literature(c.literature), options);
  const auto session = manager.create_session();
  for (const auto& text : messages) {
    manager.post_message(session.id, text, [](const json& event) { std::cout << event.dump() << '\n'; });
  }
  return 0;
}

int cmd_eval(const Common& c, const std::string& cases_path, const std::string& transcripts_dir,
             const std::string& rows_path, const std::string& review_path) {
  json request = json::object();
  if (!rows_path.empty()) {
    const auto doc = read_json_file(rows_path);
    request["rows"] = doc.at("rows");
    if (doc.contains("reported")) request["reported"] = doc["reported"];
  } else {
    json cases = json::array();
    std::ifstream in(cases_path);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + cases_path);
    for (std::string line; std::getline(in, line);) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) cases.push_back(json::parse(line));
    }
    request["cases"] = cases;
    if (!transcripts_dir.empty()) {
      json transcripts = json::object();
      for (const auto& entry : fs::directory_iterator(transcripts_dir)) {
        if (entry.path().extension() == ".json") transcripts[entry.path().stem().string()] = read_json_file(entry.path());
      }
      request["transcripts"] = transcripts;
    }
  }
  json result;
  if (request.contains("rows") || request.contains("transcripts")) {
    result = service::run_eval_request(nullptr, request);
  } else {
    std::map<std::string, std::shared_ptr<const service::KgBundle>> kgs{{c.kg, load_one(c)}};
    service::ManagerOptions options;
    options.default_kg = c.kg;
    service::SessionManager manager(std::move(kgs), make_provider(c.provider), make_literature(c.literature), options);
    result = service::run_eval_request(&manager, request);
  }
  std::cout << result.at("text").get<std::string>();
  if (!review_path.empty() && result.contains("review_sheet")) {
    std::ofstream out(review_path);
    out << result["review_sheet"].get<std::string>();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chatd: conversational network-medicine workbench"};
  app.require_subcommand(1);
  Common c;
  app.add_option("--kg-dir", c.kg_dir, "Directory of graphs, one subdirectory each")->envname("CHATD_KG_DIR");
  app.add_option("--kg", c.kg, "Graph name")->envname("CHATD_KG");
  app.add_option("--provider", c.provider, "\"http\" or a scripted-provider JSON file")->envname("CHATD_PROVIDER");
  app.add_option("--literature", c.literature, "\"fixtures\", \"live\" or a fixture directory")
      ->envname("CHATD_LITERATURE");
  app.add_option("--log-level", c.log_level, "trace, debug, info, warn, error")->envname("CHATD_LOG_LEVEL");

  std::string listen = "127.0.0.1:8080";
  std::string persist_dir;
  auto* serve = app.add_subcommand("serve", "Run the REST and WebSocket server");
  serve->add_option("--listen", listen, "host:port")->envname("CHATD_LISTEN");
  serve->add_option("--persist-dir", persist_dir, "Session snapshot directory")->envname("CHATD_PERSIST_DIR");

  std::vector<std::string> seeds;
  std::size_t n_added = 10;
  std::string edge_type = "ppi";
  auto* diamond = app.add_subcommand("diamond", "Expand a disease module");
  diamond->add_option("--seeds", seeds, "Seed ids or symbols")->required()->delimiter(',');
  diamond->add_option("-n,--n-added", n_added, "Nodes to add");
  diamond->add_option("--edge-type", edge_type, "Network edge type");

  std::string method = "trustrank";
  std::optional<std::size_t> top_k;
  auto* rank = app.add_subcommand("rank", "Rank drugs against seeds");
  rank->add_option("--seeds", seeds, "Seed ids or symbols")->required()->delimiter(',');
  rank->add_option("--method", method, "trustrank or closeness");
  rank->add_option("--top-k", top_k, "Keep the best k");

  std::vector<std::string> genes;
  std::size_t samples = 999;
  std::uint64_t seed = 42;
  auto* coh = app.add_subcommand("coherence", "Functional coherence of a gene set");
  coh->add_option("--genes", genes, "Gene ids or symbols")->required()->delimiter(',');
  coh->add_option("--samples", samples, "Random background sets");
  coh->add_option("--seed", seed, "RNG seed");

  std::string question;
  auto* query_cmd = app.add_subcommand("query", "Answer a question from the knowledge graph");
  query_cmd->add_option("question", question)->required();

  std::vector<std::string> messages;
  auto* replay = app.add_subcommand("replay", "Run turns in a fresh session and print events as JSON lines");
  replay->add_option("-m,--message", messages, "User message (repeatable)")->required();

  std::string cases_path, transcripts_dir, rows_path, review_path;
  auto* eval_cmd = app.add_subcommand("eval", "Score cases or render a metrics table");
  eval_cmd->add_option("--cases", cases_path, "Cases, one JSON object per line");
  eval_cmd->add_option("--transcripts", transcripts_dir, "Directory of <case-id>.json event arrays");
  eval_cmd->add_option("--rows", rows_path, "Metrics rows JSON ({\"rows\", \"reported\"?})");
  eval_cmd->add_option("--review-sheet", review_path, "Write the manual review CSV here");

  CLI11_PARSE(app, argc, argv);
  // stdout carries command output; logs go to stderr.
  spdlog::set_default_logger(spdlog::stderr_color_mt("chatd"));
  spdlog::set_level(spdlog::level::from_str(c.log_level));

  try {
    if (*serve) return cmd_serve(c, listen, persist_dir);
    if (*diamond) return cmd_diamond(c, seeds, n_added, edge_type);
    if (*rank) return cmd_rank(c, seeds, method, top_k);
    if (*coh) return cmd_coherence(c, genes, samples, seed);
    if (*query_cmd) return cmd_query(c, question);
    if (*replay) return cmd_replay(c, messages);
    if (*eval_cmd) {
      if (cases_path.empty() && rows_path.empty()) throw Error(ErrorCode::kInvalidParams, "eval needs --cases or --rows");
      return cmd_eval(c, cases_path, transcripts_dir, rows_path, review_path);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
