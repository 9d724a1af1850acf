#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "narrator/analytics/text.hpp"
#include "narrator/game.hpp"
#include "narrator/gateway.hpp"
#include "narrator/sentiment.hpp"
#include "narrator/store.hpp"

namespace narrator::app {

namespace fs = std::filesystem;

struct ServerConfig {
  std::string bind = "127.0.0.1";
  int port = 8080;
};

/// Paths are absolute after loading; relative paths in the file resolve
/// against the directory holding the config file.
struct Config {
  std::vector<gateway::ModelSpec> models;
  gateway::ModelSpec embedding_model;
  fs::path store_path;
  fs::path sheet_path;
  fs::path gazetteer_path;
  fs::path lexicon_path;
  ServerConfig server;

  const gateway::ModelSpec& model(const std::string& label) const;  // NotFoundError
  std::vector<std::string> labels() const;
};

/// Throws ConfigError naming the line (syntax errors) or the field path.
/// `check_files` verifies that sheet, gazetteer, lexicon and mock scripts exist.
Config parse_config(std::string_view json_text, const fs::path& base_dir, bool check_files = true);
Config load_config(const fs::path& path);

std::vector<std::string> list_models(const Config& config);

/// Injection points for deterministic runs.
struct Hooks {
  Clock clock = system_now;
  std::function<std::string()> new_id;
  gateway::Sleeper sleeper;
  gateway::EnvLookup env = gateway::process_env();
  std::shared_ptr<gateway::Transport> transport;  // defaults to the HTTP transport
};

/// Loaded configuration plus the long-lived objects built from it.
class App {
 public:
  explicit App(Config config, Hooks hooks = {});

  const Config& config() const { return config_; }
  const gateway::Gateway& gateway() const { return *gateway_; }
  gateway::Gateway& gateway() { return *gateway_; }
  store::ProtocolStore& store() { return *store_; }
  const store::ProtocolStore& store() const { return *store_; }
  const game::PromptSheet& sheet() const { return sheet_; }
  const Hooks& hooks() const { return hooks_; }
  game::EngineOptions engine_options() const;

  /// Loaded on first use.
  const analytics::Gazetteer& gazetteer() const;
  const sentiment::Lexicon& lexicon() const;

 private:
  Config config_;
  Hooks hooks_;
  std::unique_ptr<gateway::Gateway> gateway_;
  std::unique_ptr<store::ProtocolStore> store_;
  game::PromptSheet sheet_;
  mutable std::once_flag gazetteer_once_, lexicon_once_;
  mutable std::optional<analytics::Gazetteer> gazetteer_;
  mutable std::optional<sentiment::Lexicon> lexicon_;
};

// ---------------------------------------------------------------------------
// Play service (backs the HTTP API)

/// Outcome of a service call: HTTP status plus a JSON body.
struct Reply {
  int status = 200;
  std::string body;
};

class PlayService {
 public:
  explicit PlayService(App& app);

  Reply models() const;
  Reply create_session(std::string_view body);
  Reply get_session(const std::string& id) const;
  Reply choose(const std::string& id, std::string_view body);
  Reply reset(const std::string& id);
  Reply critique(const std::string& id, std::string_view body);

 private:
  std::shared_ptr<game::Session> find(const std::string& id) const;

  App& app_;
  game::Engine engine_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<game::Session>> sessions_;
};

/// cpp-httplib server exposing the play API:
///   GET  /models
///   POST /sessions                 {"model_label": "..."}
///   GET  /sessions/{id}
///   POST /sessions/{id}/choice     {"choice": 1..4}
///   POST /sessions/{id}/reset
///   POST /sessions/{id}/critique   {"critic_label": "...", "instruction": "..."}
class HttpServer {
 public:
  explicit HttpServer(PlayService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws Error on failure.
  int bind(const std::string& host, int port);
  void listen();            // blocks until stop()
  void start();             // listen on a background thread
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Terminal play

struct PlayResult {
  std::string session_id;
  game::SessionState state;
  int choices = 0;
};

/// Prints narration and options, reads 1..n or `r` per prompt. EOF resets the
/// session. Persists through the app's store like served sessions.
PlayResult play(App& app, const std::string& model_label, std::istream& in, std::ostream& out);

// ---------------------------------------------------------------------------
// Critique

inline constexpr std::string_view kDefaultCritiqueInstruction =
    "Evaluate the historical accuracy of the protocol. Point out statements that are wrong or invented.";

/// Narrator and player turns of the protocol followed by the instruction.
std::string render_critique_prompt(const store::ProtocolRecord& record, std::string_view instruction);

store::CritiqueRecord critique(App& app, const std::string& session_id, const std::string& critic_label,
                               std::string_view instruction = kDefaultCritiqueInstruction);

// ---------------------------------------------------------------------------
// Analysis pipeline

/// Embeddings cached per (model_id, SHA-256 of the text).
class EmbeddingCache {
 public:
  explicit EmbeddingCache(fs::path dir);

  static std::string content_hash(std::string_view text);

  std::optional<gateway::EmbeddingVector> get(const std::string& model_id, std::string_view text) const;
  void put(const std::string& model_id, std::string_view text, const gateway::EmbeddingVector& vec);
  const fs::path& dir() const { return dir_; }

 private:
  using Table = std::map<std::string, gateway::EmbeddingVector>;
  Table& table(const std::string& model_id) const;
  fs::path file_for(const std::string& model_id) const;

  fs::path dir_;
  mutable std::map<std::string, Table> tables_;
};

struct AnalyzeOptions {
  fs::path out_dir = "analysis";
  std::optional<fs::path> intros_file;  // JSON array of {model_label, text, source_id}
  std::optional<fs::path> cache_dir;    // defaults to <store>/embeddings
  bool include_options = false;
  int threshold = 5;
};

inline constexpr const char* kAnalyzeSubcommands[] = {"summary", "embed", "dissim", "pca",
                                                      "wordstats", "ner", "sentiment"};

/// Runs one subcommand and returns the files it wrote.
std::vector<fs::path> analyze(App& app, const std::string& subcommand, const AnalyzeOptions& options,
                              std::ostream& log);

/// corpus.json, intros.json and one text file per intro under intros/.
std::vector<fs::path> export_corpus(App& app, const fs::path& out_dir, bool include_options, std::ostream& log);

LabeledTexts load_labeled_texts(const fs::path& file);
void save_labeled_texts(const LabeledTexts& texts, const fs::path& file);

}  // namespace narrator::app
