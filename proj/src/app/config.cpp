#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "narrator/app.hpp"
#include "narrator/error.hpp"

namespace narrator::app {

using json = nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

std::string join(const std::string& field, const std::string& key) { return field.empty() ? key : field + "." + key; }

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError("config: " + field + ": " + what);
}

void reject_unknown(const json& obj, const std::string& field, std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) {
      fail(join(field, it.key()), "unknown field");
    }
  }
}

const json& require(const json& obj, const char* key, const std::string& field) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(join(field, key), "missing");
  return *it;
}

std::string get_string(const json& obj, const char* key, const std::string& field, bool required) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) fail(join(field, key), "missing");
    return {};
  }
  if (!it->is_string()) fail(join(field, key), "expected a string");
  return it->get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

gateway::ModelSpec parse_model(const json& j, const std::string& field, const fs::path& base, bool check_files) {
  if (!j.is_object()) fail(field, "expected an object");
  reject_unknown(j, field, {"label", "kind", "endpoint", "model_id", "auth_env", "params", "mock_script"});
  gateway::ModelSpec m;
  m.label = get_string(j, "label", field, true);
  try {
    m.kind = gateway::parse_provider_kind(get_string(j, "kind", field, true));
  } catch (const Error& e) {
    fail(field + ".kind", e.what());
  }
  m.endpoint = get_string(j, "endpoint", field, false);
  m.model_id = get_string(j, "model_id", field, false);
  m.auth_env = get_string(j, "auth_env", field, false);
  if (auto it = j.find("params"); it != j.end()) {
    const std::string pf = field + ".params";
    if (!it->is_object()) fail(pf, "expected an object");
    reject_unknown(*it, pf, {"temperature", "max_tokens", "seed"});
    if (auto t = it->find("temperature"); t != it->end()) {
      if (!t->is_number()) fail(pf + ".temperature", "expected a number");
      m.default_params.temperature = t->get<double>();
    }
    if (auto t = it->find("max_tokens"); t != it->end()) {
      if (!t->is_number_integer()) fail(pf + ".max_tokens", "expected an integer");
      m.default_params.max_tokens = t->get<int>();
    }
    if (auto t = it->find("seed"); t != it->end()) {
      if (!t->is_number_integer()) fail(pf + ".seed", "expected an integer");
      m.default_params.seed = t->get<std::int64_t>();
    }
  }
  if (auto s = get_string(j, "mock_script", field, false); !s.empty()) {
    m.mock_script = resolve(base, s).string();
    if (check_files && !fs::exists(m.mock_script)) fail(field + ".mock_script", "file not found: " + m.mock_script);
  }
  try {
    gateway::validate(m);
  } catch (const ConfigError& e) {
    fail(field, e.what());
  }
  return m;
}

fs::path parse_path(const json& root, const char* key, const fs::path& base, bool check_files) {
  const std::string s = get_string(root, key, "", true);
  if (s.empty()) fail(key, "empty path");
  fs::path p = resolve(base, s);
  if (check_files && !fs::exists(p)) fail(key, "file not found: " + p.string());
  return p;
}

}  // namespace

const gateway::ModelSpec& Config::model(const std::string& label) const {
  for (const auto& m : models) {
    if (m.label == label) return m;
  }
  throw NotFoundError("unknown model '" + label + "'");
}

std::vector<std::string> Config::labels() const {
  std::vector<std::string> out;
  for (const auto& m : models) out.push_back(m.label);
  return out;
}

std::vector<std::string> list_models(const Config& config) { return config.labels(); }

Config parse_config(std::string_view text, const fs::path& base_dir, bool check_files) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: line " + std::to_string(line_of(text, e.byte == 0 ? 0 : e.byte - 1)) +
                      ": invalid JSON (" + e.what() + ")");
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  reject_unknown(root, "", {"schema_version", "models", "embedding_model", "store_path", "sheet_path",
                            "gazetteer_path", "lexicon_path", "server"});
  const json& version = require(root, "schema_version", "");
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
    fail("schema_version", "expected " + std::to_string(kSchemaVersion));
  }

  Config c;
  const json& models = require(root, "models", "");
  if (!models.is_array() || models.empty()) fail("models", "expected a non-empty array");
  std::set<std::string> seen;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const std::string field = "models[" + std::to_string(i) + "]";
    c.models.push_back(parse_model(models[i], field, base_dir, check_files));
    if (!seen.insert(c.models.back().label).second) fail(field + ".label", "duplicate label '" + c.models.back().label + "'");
  }
  c.embedding_model = parse_model(require(root, "embedding_model", ""), "embedding_model", base_dir, check_files);

  c.store_path = resolve(base_dir, get_string(root, "store_path", "", true));
  if (c.store_path.empty()) fail("store_path", "empty path");
  c.sheet_path = parse_path(root, "sheet_path", base_dir, check_files);
  c.gazetteer_path = parse_path(root, "gazetteer_path", base_dir, check_files);
  c.lexicon_path = parse_path(root, "lexicon_path", base_dir, check_files);

  if (auto it = root.find("server"); it != root.end()) {
    if (!it->is_object()) fail("server", "expected an object");
    reject_unknown(*it, "server", {"bind", "port"});
    if (auto b = it->find("bind"); b != it->end()) {
      if (!b->is_string()) fail("server.bind", "expected a string");
      c.server.bind = b->get<std::string>();
    }
    if (auto p = it->find("port"); p != it->end()) {
      if (!p->is_number_integer() || p->get<int>() < 0 || p->get<int>() > 65535) fail("server.port", "expected 0-65535");
      c.server.port = p->get<int>();
    }
  }
  return c;
}

Config load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  fs::path base = fs::absolute(path).parent_path();
  try {
    return parse_config(ss.str(), base);
  } catch (const ConfigError& e) {
    throw ConfigError(path.filename().string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

App::App(Config config, Hooks hooks) : config_(std::move(config)), hooks_(std::move(hooks)) {
  if (!hooks_.transport) hooks_.transport = gateway::make_http_transport();
  if (!hooks_.clock) hooks_.clock = system_now;
  if (!hooks_.env) hooks_.env = gateway::process_env();
  gateway_ = std::make_unique<gateway::Gateway>(hooks_.transport, gateway::RetryPolicy{}, hooks_.sleeper, hooks_.env);
  store_ = std::make_unique<store::ProtocolStore>(config_.store_path, hooks_.clock);
  sheet_ = game::load_sheet(config_.sheet_path);
}

game::EngineOptions App::engine_options() const {
  game::EngineOptions o;
  o.clock = hooks_.clock;
  o.new_id = hooks_.new_id;
  return o;
}

const analytics::Gazetteer& App::gazetteer() const {
  std::call_once(gazetteer_once_, [&] { gazetteer_ = analytics::Gazetteer::load(config_.gazetteer_path); });
  return *gazetteer_;
}

const sentiment::Lexicon& App::lexicon() const {
  // The published lexicon repeats a few terms, so duplicates are tolerated here.
  std::call_once(lexicon_once_,
                 [&] { lexicon_ = sentiment::Lexicon::load(config_.lexicon_path, {.allow_duplicates = true}); });
  return *lexicon_;
}

}  // namespace narrator::app
