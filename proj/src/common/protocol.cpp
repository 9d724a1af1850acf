#include "narrator/protocol.hpp"

#include "narrator/error.hpp"

namespace narrator {

const char* to_string(EventRole role) {
  switch (role) {
    case EventRole::system:
      return "system";
    case EventRole::narrator:
      return "narrator";
    case EventRole::player:
      return "player";
    case EventRole::engine:
      break;
  }
  return "engine";
}

EventRole parse_event_role(std::string_view text) {
  for (auto r : {EventRole::system, EventRole::narrator, EventRole::player, EventRole::engine}) {
    if (text == to_string(r)) return r;
  }
  throw ParseError("unknown event role '" + std::string(text) + "'");
}

const char* to_string(Validity v) {
  switch (v) {
    case Validity::valid:
      return "valid";
    case Validity::invalid_technical:
      return "invalid_technical";
    case Validity::invalid_refusal:
      return "invalid_refusal";
    case Validity::intro_only:
      break;
  }
  return "intro_only";
}

Validity parse_validity(std::string_view text) {
  for (auto v : {Validity::valid, Validity::invalid_technical, Validity::invalid_refusal, Validity::intro_only}) {
    if (text == to_string(v)) return v;
  }
  throw ParseError("unknown validity '" + std::string(text) + "'");
}

}  // namespace narrator
