#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "narrator/error.hpp"
#include "narrator/gateway.hpp"
#include "narrator/protocol.hpp"
#include "narrator/time.hpp"

namespace narrator::game {

struct PromptSheet {
  std::string id = "schlick-1936-en";
  std::string body;
  int turn_limit = 10;
  int option_count = 4;
  std::string end_token = "5";

  bool operator==(const PromptSheet&) const = default;
};

/// The English role-play sheet: Vienna, 15 June 1936, four numbered options per turn.
PromptSheet default_sheet();

/// Header lines `key: value` (id, turn_limit, option_count, end_token), a line
/// holding only `---`, then the body verbatim.
PromptSheet parse_sheet(std::string_view text);
PromptSheet load_sheet(const std::filesystem::path& path);
std::string render_sheet(const PromptSheet& sheet);
void validate(const PromptSheet& sheet);

struct Option {
  int number = 0;
  std::string label;
  bool operator==(const Option&) const = default;
};

struct OptionSet {
  std::vector<Option> items;
  bool operator==(const OptionSet&) const = default;
};

/// Narration split from its trailing option block.
struct ParsedReply {
  std::string narration;
  OptionSet options;
};

/// Thrown when the option block does not hold exactly the expected options.
class OptionParseError : public ValidationError {
 public:
  OptionParseError(const std::string& what, std::vector<Option> found)
      : ValidationError(what), found_(std::move(found)) {}
  const std::vector<Option>& found() const { return found_; }

 private:
  std::vector<Option> found_;
};

/// True if `line` matches the option grammar `^\s*([1-9])[.):]\s+(.+)$`.
std::optional<Option> match_option_line(std::string_view line);

/// Extracts the trailing block of numbered option lines. Blank lines inside and
/// after the block are ignored. Numbers must run 1..option_count.
ParsedReply parse_options(std::string_view reply, int option_count);
std::string render_options(const OptionSet& options);

struct RefusalPatterns {
  std::vector<std::string> stems{"i can't", "i cannot", "i won't", "unable to comply", "cannot assist"};
  /// Only this many leading characters are searched ("near session start").
  std::size_t window = 400;
};

/// A reply is a refusal if it is empty, or it matches a refusal stem and holds
/// no parsable option block.
bool detect_refusal(std::string_view text, int option_count = 4, const RefusalPatterns& patterns = {});

enum class AbortReason { reset, refusal, provider_failure };
const char* to_string(AbortReason reason);

struct SessionState {
  enum class Kind { created, awaiting_choice, ended, aborted };
  Kind kind = Kind::created;
  std::string summary;     // for ended
  AbortReason reason{};    // for aborted

  bool terminal() const { return kind == Kind::ended || kind == Kind::aborted; }
  std::string name() const;
};

struct Turn {
  std::string narration;
  OptionSet options;
  int turn_index = 0;
  bool is_final = false;
  std::optional<std::string> summary;  // final turn only

  bool operator==(const Turn&) const = default;
};

class Engine;

/// One play-through. Operations go through Engine; a session allows at most one
/// in-flight operation and rejects concurrent ones with BusyError.
class Session {
 public:
  const std::string& id() const { return meta_.session_id; }
  const gateway::ModelSpec& model() const { return model_; }
  const PromptSheet& sheet() const { return sheet_; }
  const SessionState& state() const { return state_; }
  int player_turns_used() const { return turns_used_; }
  int turns_remaining() const { return sheet_.turn_limit - turns_used_; }
  const std::vector<ProtocolEvent>& transcript() const { return transcript_; }
  const std::vector<gateway::ChatMessage>& messages() const { return messages_; }
  const std::optional<Turn>& last_turn() const { return last_turn_; }
  const SessionMeta& meta() const { return meta_; }

 private:
  friend class Engine;
  Session(SessionMeta meta, gateway::ModelSpec model, PromptSheet sheet)
      : meta_(std::move(meta)), model_(std::move(model)), sheet_(std::move(sheet)) {}

  SessionMeta meta_;
  gateway::ModelSpec model_;
  PromptSheet sheet_;
  SessionState state_;
  int turns_used_ = 0;
  std::vector<ProtocolEvent> transcript_;
  std::vector<gateway::ChatMessage> messages_;
  std::optional<Turn> last_turn_;
  std::atomic<bool> in_flight_{false};
};

/// Thrown by begin/choose/finish when the provider side made the session abort.
/// The session is already in its Aborted state and persisted.
class SessionAborted : public Error {
 public:
  SessionAborted(const std::string& what, AbortReason reason) : Error(what), reason_(reason) {}
  AbortReason reason() const { return reason_; }

 private:
  AbortReason reason_;
};

struct EngineOptions {
  RefusalPatterns refusal;
  Clock clock = system_now;
  std::function<std::string()> new_id;  // defaults to random 128-bit hex
  /// Re-asks after an unparsable option block before aborting.
  int parse_retries = 1;
};

/// Drives sessions through the prompt-sheet state machine:
///
///   Created --begin--> AwaitingChoice --choose*--> AwaitingChoice
///   AwaitingChoice --finish / turn limit--> Ended(summary)
///   any non-terminal --reset / refusal / provider failure--> Aborted(reason)
///
/// Every event reaches the sink before the next provider call.
class Engine {
 public:
  Engine(const gateway::Gateway& gateway, ProtocolSink* sink, EngineOptions options = {});

  std::shared_ptr<Session> new_session(const gateway::ModelSpec& model, const PromptSheet& sheet);
  Turn begin(Session& session);
  /// Sends the bare digit. The choice that exhausts the turn budget also runs
  /// finish, and the returned turn is final.
  Turn choose(Session& session, int choice);
  std::string finish(Session& session);
  void reset(Session& session);

 private:
  class Guard;
  void record(Session& s, EventRole role, std::string text, bool rejected = false);
  void abort(Session& s, AbortReason reason, const std::string& detail);
  std::string ask(Session& s);
  ParsedReply ask_for_turn(Session& s, bool check_refusal);
  std::string run_finish(Session& s);
  std::string corrective_message(int option_count) const;

  const gateway::Gateway& gateway_;
  ProtocolSink* sink_;
  EngineOptions options_;
};

}  // namespace narrator::game
