#include "narrator/gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "narrator/analytics/embedding_space.hpp"
#include "narrator/error.hpp"
#include "narrator/utf8.hpp"

namespace narrator::gateway {

using json = nlohmann::json;

const char* to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::openai_compatible:
      return "openai-compatible";
    case ProviderKind::mistral:
      return "mistral";
    case ProviderKind::deepseek:
      return "deepseek";
    case ProviderKind::local_server:
      return "local-server";
    case ProviderKind::mock:
      break;
  }
  return "mock";
}

ProviderKind parse_provider_kind(std::string_view text) {
  for (auto k : {ProviderKind::openai_compatible, ProviderKind::mistral, ProviderKind::deepseek,
                 ProviderKind::local_server, ProviderKind::mock}) {
    if (text == to_string(k)) return k;
  }
  throw ConfigError("unknown provider_kind '" + std::string(text) + "'");
}

const char* to_string(Role role) {
  switch (role) {
    case Role::system:
      return "system";
    case Role::user:
      return "user";
    case Role::assistant:
      break;
  }
  return "assistant";
}

const char* to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop:
      return "stop";
    case FinishReason::length:
      return "length";
    case FinishReason::filtered:
      return "filtered";
    case FinishReason::error:
      break;
  }
  return "error";
}

const char* to_string(Pooling pooling) { return pooling == Pooling::mean ? "mean" : "provider-pooled"; }

GenParams GenParams::merged(const GenParams& o) const {
  GenParams out = *this;
  if (o.temperature) out.temperature = o.temperature;
  if (o.max_tokens) out.max_tokens = o.max_tokens;
  if (o.seed) out.seed = o.seed;
  return out;
}

void validate(const ModelSpec& spec) {
  if (spec.label.empty()) throw ConfigError("model label is empty");
  if (spec.kind == ProviderKind::mock) {
    if (spec.mock_script.empty()) throw ConfigError("model '" + spec.label + "': mock provider requires a script");
  } else if (spec.endpoint.empty()) {
    throw ConfigError("model '" + spec.label + "': endpoint is empty");
  }
  const auto& p = spec.default_params;
  if (p.temperature && !(*p.temperature >= 0)) throw ConfigError("model '" + spec.label + "': temperature < 0");
  if (p.max_tokens && *p.max_tokens <= 0) throw ConfigError("model '" + spec.label + "': max_tokens must be positive");
}

std::chrono::milliseconds RetryPolicy::delay_before_retry(int retry) const {
  if (backoff.empty()) return std::chrono::milliseconds{0};
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(retry), backoff.size() - 1);
  return backoff[i];
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (v == nullptr) return std::nullopt;
    return std::string(v);
  };
}

// ---------------------------------------------------------------------------
// Mock scripts

MockScript MockScript::from_replies(std::vector<std::string> replies) {
  MockScript s;
  for (auto& r : replies) s.replies.push_back(MockReply{MockReply::Kind::text, std::move(r)});
  return s;
}

MockScript MockScript::parse(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("mock script: ") + e.what());
  }
  MockScript s;
  const json* replies = &doc;
  if (doc.is_object()) {
    if (!doc.contains("replies")) throw ConfigError("mock script: missing 'replies'");
    replies = &doc.at("replies");
    if (doc.contains("embeddings")) {
      for (const auto& [text, node] : doc.at("embeddings").items()) s.embeddings[text] = node.dump();
    }
    if (doc.contains("embedding_dim")) s.embedding_dim = doc.at("embedding_dim").get<std::size_t>();
  }
  if (!replies->is_array()) throw ConfigError("mock script: 'replies' must be an array");
  for (const auto& r : *replies) {
    MockReply reply;
    if (r.is_string()) {
      reply.text = r.get<std::string>();
    } else if (r.is_object() && r.contains("fail")) {
      if (r.at("fail") != "timeout") throw ConfigError("mock script: unknown failure " + r.at("fail").dump());
      reply.kind = MockReply::Kind::timeout;
    } else if (r.is_object() && r.contains("status")) {
      reply.kind = MockReply::Kind::http_status;
      reply.status = r.at("status").get<int>();
    } else if (r.is_object() && r.contains("text")) {
      reply.text = r.at("text").get<std::string>();
      const std::string fr = r.value("finish_reason", "stop");
      if (fr == "length") {
        reply.finish_reason = FinishReason::length;
      } else if (fr == "filtered") {
        reply.finish_reason = FinishReason::filtered;
      } else if (fr != "stop") {
        throw ConfigError("mock script: unknown finish_reason '" + fr + "'");
      }
    } else {
      throw ConfigError("mock script: bad reply entry " + r.dump());
    }
    s.replies.push_back(std::move(reply));
  }
  return s;
}

MockScript MockScript::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open mock script " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Deterministic pseudo-random token vector; identical tokens map to identical vectors.
std::vector<double> hashed_vector(std::string_view token, std::size_t dim) {
  std::mt19937_64 gen(fnv1a(token));
  std::vector<double> v(dim);
  for (auto& x : v) x = static_cast<double>(gen() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  return v;
}

std::string mock_chat_body(const MockReply& reply) {
  json choice = {{"index", 0}, {"message", {{"role", "assistant"}, {"content", reply.text}}}};
  switch (reply.finish_reason) {
    case FinishReason::length:
      choice["finish_reason"] = "length";
      break;
    case FinishReason::filtered:
      choice["finish_reason"] = "content_filter";
      choice["message"]["content"] = nullptr;
      break;
    default:
      choice["finish_reason"] = "stop";
  }
  return json{{"choices", json::array({choice})}}.dump();
}

std::string mock_embedding_body(const MockScript& script, std::string_view text) {
  const auto it = script.embeddings.find(std::string(text));
  if (it != script.embeddings.end()) {
    return json{{"data", json::array({json{{"embedding", json::parse(it->second)}}})}}.dump();
  }
  json tokens = json::array();
  for (const auto& w : utf8::split_whitespace(text)) tokens.push_back(hashed_vector(utf8::to_lower(w), script.embedding_dim));
  if (tokens.empty()) tokens.push_back(hashed_vector(text, script.embedding_dim));
  return json{{"data", json::array({json{{"embedding", tokens}}})}}.dump();
}

std::string join_url(const std::string& endpoint, std::string_view path) {
  std::string url = endpoint;
  while (!url.empty() && url.back() == '/') url.pop_back();
  return url + std::string(path);
}

}  // namespace

// ---------------------------------------------------------------------------
// Wire format

std::string chat_request_body(const ModelSpec& model, std::span<const ChatMessage> messages, const GenParams& params) {
  json body;
  if (!(model.kind == ProviderKind::local_server && model.model_id.empty())) body["model"] = model.model_id;
  json msgs = json::array();
  for (const auto& m : messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  body["messages"] = std::move(msgs);
  if (params.temperature) body["temperature"] = *params.temperature;
  if (params.max_tokens) body["max_tokens"] = *params.max_tokens;
  if (params.seed) body[model.kind == ProviderKind::mistral ? "random_seed" : "seed"] = *params.seed;
  return body.dump();
}

ChatResult parse_chat_response(std::string_view body, const std::string& model_label) {
  ChatResult r;
  r.model_label = model_label;
  try {
    const json doc = json::parse(body);
    const json& choice = doc.at("choices").at(0);
    const json& content = choice.at("message").at("content");
    const json& fr = choice.contains("finish_reason") ? choice.at("finish_reason") : json(nullptr);
    const std::string reason = fr.is_string() ? fr.get<std::string>() : "stop";
    if (reason == "content_filter") {
      r.finish_reason = FinishReason::filtered;
      return r;
    }
    if (content.is_null()) throw ProviderError("chat response without content (finish_reason=" + reason + ")");
    r.text = content.get<std::string>();
    r.finish_reason = reason == "length" ? FinishReason::length : FinishReason::stop;
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed chat response: ") + e.what());
  }
  return r;
}

EmbeddingVector parse_embedding_response(std::string_view body, const std::string& source_model) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProviderError(std::string("malformed embedding response: ") + e.what());
  }
  const json* node = nullptr;
  if (doc.is_object() && doc.contains("data") && doc["data"].is_array() && !doc["data"].empty()) {
    node = &doc["data"][0]["embedding"];
  } else if (doc.is_array() && !doc.empty() && doc[0].is_object()) {
    node = &doc[0]["embedding"];
  } else if (doc.is_object() && doc.contains("embedding")) {
    node = &doc["embedding"];
  }
  if (node == nullptr || !node->is_array() || node->empty()) throw ProviderError("empty embedding response");

  EmbeddingVector out;
  out.source_model = source_model;
  try {
    if ((*node)[0].is_array()) {
      const auto tokens = node->get<std::vector<std::vector<double>>>();
      const auto pooled = analytics::mean_pool(tokens);
      out.values.assign(pooled.data(), pooled.data() + pooled.size());
      out.pooling = Pooling::mean;
    } else {
      out.values = node->get<std::vector<double>>();
      out.pooling = Pooling::provider_pooled;
    }
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed embedding values: ") + e.what());
  }
  for (double v : out.values) {
    if (!std::isfinite(v)) throw ProviderError("embedding contains non-finite values");
  }
  return out;
}

// ---------------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Transport> transport, RetryPolicy retry, Sleeper sleeper, EnvLookup env)
    : transport_(std::move(transport)), retry_(std::move(retry)), sleeper_(std::move(sleeper)), env_(std::move(env)) {
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

void Gateway::add_mock_script(const std::string& ref, MockScript script) {
  std::lock_guard lock(mock_mutex_);
  mocks_[ref] = std::make_shared<const MockScript>(std::move(script));
}

std::shared_ptr<const MockScript> Gateway::mock_script(const ModelSpec& model) const {
  std::lock_guard lock(mock_mutex_);
  auto& slot = mocks_[model.mock_script];
  if (!slot) slot = std::make_shared<const MockScript>(MockScript::load(model.mock_script));
  return slot;
}

std::optional<std::string> Gateway::credential(const ModelSpec& model) const {
  if (model.kind == ProviderKind::mock || model.auth_env.empty()) return std::nullopt;
  auto value = env_(model.auth_env);
  if (!value || value->empty()) {
    throw AuthError("model '" + model.label + "': environment variable " + model.auth_env + " is not set");
  }
  return value;
}

HttpResponse Gateway::with_retry(const std::function<HttpResponse()>& attempt, int& attempts) const {
  for (int i = 0;; ++i) {
    if (i > 0) sleeper_(retry_.delay_before_retry(i - 1));
    attempts = i + 1;
    const bool last = i >= retry_.max_retries;
    HttpResponse resp;
    try {
      resp = attempt();
    } catch (const TransportError&) {
      if (last) throw;
      continue;
    }
    if (resp.status >= 200 && resp.status < 300) return resp;
    if (resp.status == 401 || resp.status == 403) {
      throw AuthError("provider rejected credentials (HTTP " + std::to_string(resp.status) + ")");
    }
    if (resp.status == 429 || resp.status >= 500) {
      if (last) {
        throw TransportError("HTTP " + std::to_string(resp.status) + " after " + std::to_string(attempts) + " attempts",
                             resp.status);
      }
      continue;
    }
    throw ProviderError("HTTP " + std::to_string(resp.status) + ": " + resp.body.substr(0, 200));
  }
}

ChatResult Gateway::chat(const ModelSpec& model, std::span<const ChatMessage> messages, const GenParams& params) const {
  if (messages.empty()) throw ValidationError("chat: no messages");
  const auto key = credential(model);
  int attempts = 0;

  if (model.kind == ProviderKind::mock) {
    const auto script = mock_script(model);
    if (script->replies.empty()) throw ProviderError("mock script has no replies");
    std::size_t index = 0;
    for (const auto& m : messages) index += m.role == Role::assistant ? 1 : 0;
    const MockReply& reply = script->replies[std::min(index, script->replies.size() - 1)];
    const HttpResponse resp = with_retry(
        [&]() -> HttpResponse {
          if (reply.kind == MockReply::Kind::timeout) throw TransportError("mock: simulated timeout");
          if (reply.kind == MockReply::Kind::http_status) return {reply.status, "{}"};
          return {200, mock_chat_body(reply)};
        },
        attempts);
    ChatResult r = parse_chat_response(resp.body, model.label);
    r.attempts = attempts;
    return r;
  }

  HttpRequest req;
  req.url = join_url(model.endpoint, "/chat/completions");
  req.body = chat_request_body(model, messages, model.default_params.merged(params));
  req.timeout = retry_.timeout;
  req.headers.emplace_back("Content-Type", "application/json");
  if (key) req.headers.emplace_back("Authorization", "Bearer " + *key);

  const auto started = std::chrono::steady_clock::now();
  const HttpResponse resp = with_retry([&] { return transport_->post(req); }, attempts);
  ChatResult r = parse_chat_response(resp.body, model.label);
  r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
  r.attempts = attempts;
  return r;
}

EmbeddingVector Gateway::embed(const ModelSpec& model, std::string_view text) const {
  if (text.empty()) throw ValidationError("embed: empty text");
  const auto key = credential(model);
  int attempts = 0;
  if (model.kind == ProviderKind::mock) {
    const auto script = mock_script(model);
    const HttpResponse resp = with_retry([&]() -> HttpResponse { return {200, mock_embedding_body(*script, text)}; },
                                         attempts);
    return parse_embedding_response(resp.body, model.label);
  }
  HttpRequest req;
  req.url = join_url(model.endpoint, "/embeddings");
  json body = {{"input", std::string(text)}};
  if (!model.model_id.empty()) body["model"] = model.model_id;
  req.body = body.dump();
  req.timeout = retry_.timeout;
  req.headers.emplace_back("Content-Type", "application/json");
  if (key) req.headers.emplace_back("Authorization", "Bearer " + *key);
  const HttpResponse resp = with_retry([&] { return transport_->post(req); }, attempts);
  return parse_embedding_response(resp.body, model.label);
}

}  // namespace narrator::gateway
