#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace narrator::gateway {

enum class ProviderKind { openai_compatible, mistral, deepseek, local_server, mock };

const char* to_string(ProviderKind kind);
ProviderKind parse_provider_kind(std::string_view text);

/// Generation parameters. Unset fields are omitted from the request so the
/// provider default applies.
struct GenParams {
  std::optional<double> temperature;
  std::optional<int> max_tokens;
  std::optional<std::int64_t> seed;

  /// Fields set in `override_with` win.
  GenParams merged(const GenParams& override_with) const;
  bool operator==(const GenParams&) const = default;
};

struct ModelSpec {
  std::string label;
  ProviderKind kind = ProviderKind::mock;
  std::string endpoint;  // base URL, e.g. https://api.openai.com/v1
  std::string model_id;
  std::string auth_env;  // name of the env var holding the API key; empty = no auth header
  GenParams default_params;
  std::string mock_script;  // script path for ProviderKind::mock

  bool operator==(const ModelSpec&) const = default;
};

/// Throws ConfigError if the model spec is inconsistent.
void validate(const ModelSpec& spec);

enum class Role { system, user, assistant };
const char* to_string(Role role);

struct ChatMessage {
  Role role;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

enum class FinishReason { stop, length, filtered, error };
const char* to_string(FinishReason reason);

struct ChatResult {
  std::optional<std::string> text;  // present iff finish_reason is stop or length
  std::string model_label;
  std::chrono::milliseconds latency{0};
  FinishReason finish_reason = FinishReason::error;
  int attempts = 1;

  bool operator==(const ChatResult&) const = default;
};

enum class Pooling { mean, provider_pooled };
const char* to_string(Pooling pooling);

struct EmbeddingVector {
  std::vector<double> values;
  Pooling pooling = Pooling::provider_pooled;
  std::string source_model;

  std::size_t dim() const { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

// ---------------------------------------------------------------------------
// Transport

struct HttpRequest {
  std::string url;  // full URL including path
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::chrono::seconds timeout{120};
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Moves bytes. Throws TransportError on connection failure or timeout.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

/// cpp-httplib backed transport (http and https).
std::shared_ptr<Transport> make_http_transport();

// ---------------------------------------------------------------------------
// Mock provider

/// Canned replies for deterministic tests. Reply i answers a conversation that
/// already holds i assistant messages, so the provider stays stateless; past the
/// end the last entry repeats.
struct MockReply {
  enum class Kind { text, timeout, http_status };
  Kind kind = Kind::text;
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  int status = 0;
};

struct MockScript {
  std::vector<MockReply> replies;
  /// Exact-text embeddings: text -> JSON of the `embedding` node the endpoint
  /// would return (a flat vector, or one vector per token).
  std::map<std::string, std::string> embeddings;
  /// Dimension of the hashed bag-of-words embedding used for unlisted texts.
  std::size_t embedding_dim = 16;

  static MockScript from_replies(std::vector<std::string> replies);
  static MockScript parse(std::string_view json_text);
  static MockScript load(const std::filesystem::path& path);
};

// ---------------------------------------------------------------------------

struct RetryPolicy {
  int max_retries = 3;
  std::vector<std::chrono::milliseconds> backoff{std::chrono::seconds{1}, std::chrono::seconds{2},
                                                 std::chrono::seconds{4}};
  std::chrono::seconds timeout{120};

  std::chrono::milliseconds delay_before_retry(int retry) const;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

EnvLookup process_env();

/// Uniform client over chat-completion and embedding endpoints.
///
/// Stateless apart from a cache of parsed mock scripts; safe to share across threads.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Transport> transport = make_http_transport(), RetryPolicy retry = {},
                   Sleeper sleeper = {}, EnvLookup env = process_env());

  ChatResult chat(const ModelSpec& model, std::span<const ChatMessage> messages, const GenParams& params = {}) const;
  EmbeddingVector embed(const ModelSpec& model, std::string_view text) const;

  /// Registers an in-memory script under `ref`, taking precedence over a file of that name.
  void add_mock_script(const std::string& ref, MockScript script);

  const RetryPolicy& retry_policy() const { return retry_; }

 private:
  std::shared_ptr<const MockScript> mock_script(const ModelSpec& model) const;
  std::optional<std::string> credential(const ModelSpec& model) const;
  HttpResponse with_retry(const std::function<HttpResponse()>& attempt, int& attempts) const;

  std::shared_ptr<Transport> transport_;
  RetryPolicy retry_;
  Sleeper sleeper_;
  EnvLookup env_;
  mutable std::mutex mock_mutex_;
  mutable std::map<std::string, std::shared_ptr<const MockScript>> mocks_;
};

/// Builds the JSON request body for a chat call (exposed for wire-format tests).
std::string chat_request_body(const ModelSpec& model, std::span<const ChatMessage> messages, const GenParams& params);
ChatResult parse_chat_response(std::string_view body, const std::string& model_label);
/// Accepts OpenAI-style `data[0].embedding`, a bare array of `{embedding}`, or
/// `{embedding}`; per-token matrices are mean-pooled.
EmbeddingVector parse_embedding_response(std::string_view body, const std::string& source_model);

}  // namespace narrator::gateway
