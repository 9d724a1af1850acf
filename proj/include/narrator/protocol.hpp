#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "narrator/time.hpp"

namespace narrator {

/// Who produced a transcript line. `engine` marks messages the engine sent on
/// the player's behalf (end token, corrective re-asks); they are not player responses.
enum class EventRole { system, narrator, player, engine };

const char* to_string(EventRole role);
EventRole parse_event_role(std::string_view text);

struct ProtocolEvent {
  EventRole role = EventRole::system;
  std::string text;
  int turn_index = 0;
  Timestamp timestamp{};
  /// Narrator reply the engine did not accept (refusal or unparsable options).
  bool rejected = false;

  bool operator==(const ProtocolEvent&) const = default;
};

enum class Validity { valid, invalid_technical, invalid_refusal, intro_only };

const char* to_string(Validity v);
Validity parse_validity(std::string_view text);

/// Facts fixed when a session starts.
struct SessionMeta {
  std::string session_id;
  std::string model_label;
  std::string sheet_id;
  int option_count = 4;
  Timestamp started_at{};

  bool operator==(const SessionMeta&) const = default;
};

/// Where the engine writes events before making its next provider call.
class ProtocolSink {
 public:
  virtual ~ProtocolSink() = default;
  virtual void append_event(const SessionMeta& meta, const ProtocolEvent& event) = 0;
  /// `note` carries the abort reason or failure detail, if any.
  virtual void close_session(const std::string& session_id, Validity validity, std::optional<std::string> note) = 0;
};

}  // namespace narrator
