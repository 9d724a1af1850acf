#pragma once

#include <chrono>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "narrator/app.hpp"
#include "narrator/error.hpp"
#include "narrator/gateway.hpp"
#include "narrator/time.hpp"

#ifndef NARRATOR_SOURCE_DIR
#error "NARRATOR_SOURCE_DIR must be defined by the build"
#endif

namespace testing {

namespace fs = std::filesystem;

inline fs::path source_dir() { return NARRATOR_SOURCE_DIR; }
inline fs::path fixture(const std::string& name) { return source_dir() / "tests" / "fixtures" / name; }
inline fs::path data_file(const std::string& name) { return source_dir() / "data" / name; }

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << content;
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "narrator-test-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

/// Fixed epoch for replayable transcripts.
inline narrator::Timestamp epoch() { return narrator::parse_timestamp("2025-06-15T09:00:00.000Z"); }

inline std::function<std::string()> counter_ids(std::string prefix = "s") {
  auto n = std::make_shared<int>(0);
  return [prefix, n] {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d", ++*n);
    return prefix + buf;
  };
}

/// Transport that answers from a queue and records every request.
class ScriptedTransport : public narrator::gateway::Transport {
 public:
  struct Step {
    int status = 200;
    std::string body;
    bool timeout = false;
  };

  void push(int status, std::string body) { steps_.push_back({status, std::move(body), false}); }
  void push_timeout() { steps_.push_back({0, {}, true}); }
  /// OpenAI-style completion carrying `text`.
  void push_chat(const std::string& text, const std::string& finish = "stop") {
    nlohmann::json j = {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}, {"finish_reason", finish}}}}};
    push(200, j.dump());
  }

  narrator::gateway::HttpResponse post(const narrator::gateway::HttpRequest& request) override {
    std::lock_guard lock(mutex_);
    requests.push_back(request);
    if (steps_.empty()) throw narrator::TransportError("scripted transport exhausted", 0);
    Step s = steps_.front();
    steps_.pop_front();
    if (s.timeout) throw narrator::TransportError("timed out", 0);
    return {s.status, s.body};
  }

  std::vector<narrator::gateway::HttpRequest> requests;

 private:
  std::mutex mutex_;
  std::deque<Step> steps_;
};

/// Ten scripted turns with four options each, the final consequence and a summary.
inline std::vector<std::string> standard_replies() {
  std::vector<std::string> r;
  for (int i = 0; i <= 9; ++i) {
    r.push_back("Scene " + std::to_string(i) + ": the street outside the university, Schlick is mentioned.\n\n"
                "1. Go north\n2. Go south\n3. Ask a student\n4. Wait");
  }
  r.push_back("Shots ring out in the university building.");
  r.push_back("Summary: you uncovered part of the story.");
  return r;
}

inline std::string mock_script_json(const std::vector<std::string>& replies) {
  return nlohmann::json{{"replies", replies}}.dump(1);
}

/// A config in `dir` with mock models "mock" (standard replies), "critic" and an
/// embedding mock; `extra_models` are appended as raw JSON objects.
inline fs::path write_test_config(const fs::path& dir, const std::vector<std::string>& narrator_replies = standard_replies(),
                                  std::vector<nlohmann::json> extra_models = {}) {
  write_file(dir / "mock" / "narrator.json", mock_script_json(narrator_replies));
  write_file(dir / "mock" / "critic.json", mock_script_json({"Accurate except the weather."}));
  write_file(dir / "mock" / "embedding.json", R"({"replies": ["unused"], "embedding_dim": 16})");
  nlohmann::json models = nlohmann::json::array(
      {{{"label", "mock"}, {"kind", "mock"}, {"mock_script", "mock/narrator.json"}},
       {{"label", "critic"}, {"kind", "mock"}, {"mock_script", "mock/critic.json"}}});
  for (auto& m : extra_models) models.push_back(std::move(m));
  nlohmann::json cfg = {{"schema_version", 1},
                        {"models", models},
                        {"embedding_model", {{"label", "mock-embedding"}, {"kind", "mock"}, {"mock_script", "mock/embedding.json"}}},
                        {"store_path", "store"},
                        {"sheet_path", data_file("prompt_sheet_en.txt").string()},
                        {"gazetteer_path", data_file("gazetteer.tsv").string()},
                        {"lexicon_path", data_file("vader_lexicon.txt").string()},
                        {"server", {{"bind", "127.0.0.1"}, {"port", 0}}}};
  write_file(dir / "narrator.json", cfg.dump(2));
  return dir / "narrator.json";
}

/// Deterministic hooks: stepping clock, counter ids, no real sleeping.
inline narrator::app::Hooks test_hooks(std::shared_ptr<narrator::gateway::Transport> transport = nullptr) {
  narrator::app::Hooks h;
  h.clock = narrator::stepping_clock(epoch(), std::chrono::milliseconds{250});
  h.new_id = counter_ids();
  h.sleeper = [](std::chrono::milliseconds) {};
  h.env = [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
  h.transport = transport ? transport : std::make_shared<ScriptedTransport>();
  return h;
}

}  // namespace testing
