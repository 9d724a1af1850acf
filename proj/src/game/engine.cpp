#include <algorithm>
#include <cstdio>
#include <random>

#include "narrator/game.hpp"

namespace narrator::game {

using gateway::ChatMessage;
using gateway::Role;

const char* to_string(AbortReason reason) {
  switch (reason) {
    case AbortReason::reset:
      return "reset";
    case AbortReason::refusal:
      return "refusal";
    case AbortReason::provider_failure:
      break;
  }
  return "provider-failure";
}

std::string SessionState::name() const {
  switch (kind) {
    case Kind::created:
      return "created";
    case Kind::awaiting_choice:
      return "awaiting_choice";
    case Kind::ended:
      return "ended";
    case Kind::aborted:
      break;
  }
  return "aborted";
}

namespace {

std::string random_id() {
  std::random_device rd;
  std::uniform_int_distribution<unsigned> byte(0, 255);
  std::string id;
  char buf[3];
  for (int i = 0; i < 16; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", byte(rd));
    id += buf;
  }
  return id;
}

Validity validity_for(AbortReason reason) {
  switch (reason) {
    case AbortReason::refusal:
      return Validity::invalid_refusal;
    case AbortReason::provider_failure:
      return Validity::invalid_technical;
    case AbortReason::reset:
      break;
  }
  // The store downgrades a reset without player responses to intro_only.
  return Validity::valid;
}

}  // namespace

class Engine::Guard {
 public:
  explicit Guard(Session& s) : s_(s) {
    bool expected = false;
    if (!s_.in_flight_.compare_exchange_strong(expected, true)) {
      throw BusyError("session " + s_.id() + " has an operation in flight");
    }
  }
  ~Guard() { s_.in_flight_.store(false); }
  Guard(const Guard&) = delete;
  Guard& operator=(const Guard&) = delete;

 private:
  Session& s_;
};

Engine::Engine(const gateway::Gateway& gateway, ProtocolSink* sink, EngineOptions options)
    : gateway_(gateway), sink_(sink), options_(std::move(options)) {
  if (!options_.new_id) options_.new_id = random_id;
  if (!options_.clock) options_.clock = system_now;
}

std::shared_ptr<Session> Engine::new_session(const gateway::ModelSpec& model, const PromptSheet& sheet) {
  validate(sheet);
  SessionMeta meta;
  meta.session_id = options_.new_id();
  meta.model_label = model.label;
  meta.sheet_id = sheet.id;
  meta.option_count = sheet.option_count;
  meta.started_at = options_.clock();
  std::shared_ptr<Session> s(new Session(std::move(meta), model, sheet));
  s->messages_.push_back({Role::system, sheet.body});
  record(*s, EventRole::system, sheet.body);
  return s;
}

void Engine::record(Session& s, EventRole role, std::string text, bool rejected) {
  ProtocolEvent ev;
  ev.role = role;
  ev.text = std::move(text);
  ev.turn_index = s.turns_used_;
  ev.timestamp = options_.clock();
  if (!s.transcript_.empty()) ev.timestamp = std::max(ev.timestamp, s.transcript_.back().timestamp);
  ev.rejected = rejected;
  s.transcript_.push_back(ev);
  if (sink_ == nullptr) return;
  try {
    sink_->append_event(s.meta_, ev);
  } catch (const std::exception& e) {
    s.state_.kind = SessionState::Kind::aborted;
    s.state_.reason = AbortReason::provider_failure;
    try {
      sink_->close_session(s.id(), Validity::invalid_technical, std::string("storage: ") + e.what());
    } catch (const std::exception&) {
      // The store is already failing; the original error is what matters.
    }
    throw StorageError(std::string("could not persist event: ") + e.what());
  }
}

void Engine::abort(Session& s, AbortReason reason, const std::string& detail) {
  s.state_.kind = SessionState::Kind::aborted;
  s.state_.reason = reason;
  if (sink_ == nullptr) return;
  std::string note = to_string(reason);
  if (!detail.empty()) note += ": " + detail;
  sink_->close_session(s.id(), validity_for(reason), note);
}

std::string Engine::ask(Session& s) {
  gateway::ChatResult result;
  try {
    result = gateway_.chat(s.model_, s.messages_);
  } catch (const Error& e) {
    abort(s, AbortReason::provider_failure, e.what());
    throw SessionAborted(std::string("provider failure: ") + e.what(), AbortReason::provider_failure);
  }
  if (!result.text) {
    record(s, EventRole::narrator, "", true);
    const std::string why = std::string("no reply text (finish_reason=") + to_string(result.finish_reason) + ")";
    abort(s, AbortReason::provider_failure, why);
    throw SessionAborted(why, AbortReason::provider_failure);
  }
  return *result.text;
}

std::string Engine::corrective_message(int option_count) const {
  static constexpr const char* kWords[] = {"zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine"};
  const std::string n = option_count >= 0 && option_count <= 9 ? kWords[option_count] : std::to_string(option_count);
  return "Please list exactly " + n + " numbered options.";
}

ParsedReply Engine::ask_for_turn(Session& s, bool check_refusal) {
  const int n = s.sheet_.option_count;
  for (int attempt = 0;; ++attempt) {
    std::string text = ask(s);
    if (check_refusal && detect_refusal(text, n, options_.refusal)) {
      record(s, EventRole::narrator, text, true);
      abort(s, AbortReason::refusal, "");
      throw SessionAborted("narrator refused the role-play", AbortReason::refusal);
    }
    try {
      ParsedReply parsed = parse_options(text, n);
      record(s, EventRole::narrator, text);
      s.messages_.push_back({Role::assistant, std::move(text)});
      return parsed;
    } catch (const OptionParseError& e) {
      record(s, EventRole::narrator, text, true);
      s.messages_.push_back({Role::assistant, std::move(text)});
      if (attempt >= options_.parse_retries) {
        abort(s, AbortReason::provider_failure, e.what());
        throw SessionAborted(std::string("unparsable options: ") + e.what(), AbortReason::provider_failure);
      }
      std::string fix = corrective_message(n);
      record(s, EventRole::engine, fix);
      s.messages_.push_back({Role::user, std::move(fix)});
    }
  }
}

Turn Engine::begin(Session& s) {
  Guard guard(s);
  if (s.state_.kind != SessionState::Kind::created) {
    throw StateError("begin: session " + s.id() + " is " + s.state_.name());
  }
  ParsedReply intro = ask_for_turn(s, true);
  s.state_.kind = SessionState::Kind::awaiting_choice;
  Turn t{std::move(intro.narration), std::move(intro.options), 0, false, std::nullopt};
  s.last_turn_ = t;
  return t;
}

Turn Engine::choose(Session& s, int choice) {
  Guard guard(s);
  if (s.state_.kind != SessionState::Kind::awaiting_choice) {
    throw StateError("choose: session " + s.id() + " is " + s.state_.name());
  }
  if (choice < 1 || choice > s.sheet_.option_count) {
    throw ValidationError("choice " + std::to_string(choice) + " outside 1-" + std::to_string(s.sheet_.option_count));
  }
  if (s.turns_used_ >= s.sheet_.turn_limit) throw StateError("choose: turn budget exhausted");

  ++s.turns_used_;
  std::string digit = std::to_string(choice);
  record(s, EventRole::player, digit);
  s.messages_.push_back({Role::user, std::move(digit)});

  if (s.turns_used_ < s.sheet_.turn_limit) {
    ParsedReply next = ask_for_turn(s, false);
    Turn t{std::move(next.narration), std::move(next.options), s.turns_used_, false, std::nullopt};
    s.last_turn_ = t;
    return t;
  }

  // Last choice: its consequence is shown without options, then the game is wound up.
  std::string text = ask(s);
  record(s, EventRole::narrator, text);
  std::string narration = text;
  try {
    narration = parse_options(text, s.sheet_.option_count).narration;
  } catch (const OptionParseError&) {
  }
  s.messages_.push_back({Role::assistant, std::move(text)});
  std::string summary = run_finish(s);
  Turn t{std::move(narration), {}, s.turns_used_, true, std::move(summary)};
  s.last_turn_ = t;
  return t;
}

std::string Engine::run_finish(Session& s) {
  record(s, EventRole::engine, s.sheet_.end_token);
  s.messages_.push_back({Role::user, s.sheet_.end_token});
  std::string summary = ask(s);
  record(s, EventRole::narrator, summary);
  s.messages_.push_back({Role::assistant, summary});
  s.state_.kind = SessionState::Kind::ended;
  s.state_.summary = summary;
  if (sink_ != nullptr) sink_->close_session(s.id(), Validity::valid, std::nullopt);
  return summary;
}

std::string Engine::finish(Session& s) {
  Guard guard(s);
  if (s.state_.kind != SessionState::Kind::awaiting_choice) {
    throw StateError("finish: session " + s.id() + " is " + s.state_.name());
  }
  std::string summary = run_finish(s);
  s.last_turn_ = Turn{summary, {}, s.turns_used_, true, summary};
  return summary;
}

void Engine::reset(Session& s) {
  Guard guard(s);
  if (s.state_.terminal()) throw StateError("reset: session " + s.id() + " is already " + s.state_.name());
  abort(s, AbortReason::reset, "");
}

}  // namespace narrator::game
