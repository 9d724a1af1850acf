#include <charconv>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "narrator/app.hpp"
#include "narrator/error.hpp"

namespace narrator::app {

using json = nlohmann::json;

namespace {

json options_json(const game::OptionSet& options) {
  json out = json::array();
  for (const auto& o : options.items) out.push_back({{"number", o.number}, {"label", o.label}});
  return out;
}

json session_json(const game::Session& s) {
  json j = {{"session_id", s.id()},
            {"model_label", s.model().label},
            {"state", s.state().name()},
            {"turn_limit", s.sheet().turn_limit},
            {"player_turns_used", s.player_turns_used()},
            {"turns_remaining", s.turns_remaining()}};
  if (const auto& t = s.last_turn()) {
    j["turn"] = {{"narration", t->narration},
                 {"options", options_json(t->options)},
                 {"turn_index", t->turn_index},
                 {"is_final", t->is_final}};
    if (t->summary) j["turn"]["summary"] = *t->summary;
  }
  if (s.state().kind == game::SessionState::Kind::ended) j["summary"] = s.state().summary;
  if (s.state().kind == game::SessionState::Kind::aborted) j["abort_reason"] = game::to_string(s.state().reason);
  return j;
}

json record_json(const store::ProtocolRecord& r) {
  return {{"session_id", r.meta.session_id},
          {"model_label", r.meta.model_label},
          {"state", "finalized"},
          {"validity", to_string(r.validity)},
          {"user_response_count", r.user_response_count}};
}

Reply ok(const json& j) { return {200, j.dump()}; }

Reply error_reply(int status, const std::string& kind, const std::string& message) {
  return {status, json{{"error", kind}, {"message", message}}.dump()};
}

json parse_body(std::string_view body) {
  if (body.empty()) return json::object();
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

/// Maps library errors onto HTTP statuses.
template <class F>
Reply guarded(F&& f) {
  try {
    return f();
  } catch (const NotFoundError& e) {
    return error_reply(404, "not_found", e.what());
  } catch (const ValidationError& e) {
    return error_reply(422, "validation", e.what());
  } catch (const BusyError& e) {
    return error_reply(409, "busy", e.what());
  } catch (const StateError& e) {
    return error_reply(409, "state", e.what());
  } catch (const AuthError& e) {
    return error_reply(502, "provider_auth", e.what());
  } catch (const TransportError& e) {
    return error_reply(502, "provider", e.what());
  } catch (const ProviderError& e) {
    return error_reply(502, "provider", e.what());
  } catch (const std::exception& e) {
    return error_reply(500, "internal", e.what());
  }
}

}  // namespace

PlayService::PlayService(App& app) : app_(app), engine_(app.gateway(), &app.store(), app.engine_options()) {}

std::shared_ptr<game::Session> PlayService::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

Reply PlayService::models() const {
  return guarded([&] { return ok({{"models", list_models(app_.config())}}); });
}

Reply PlayService::create_session(std::string_view body) {
  return guarded([&] {
    const json req = parse_body(body);
    std::string label;
    for (const char* key : {"model_label", "model"}) {
      if (auto it = req.find(key); it != req.end() && it->is_string()) label = it->get<std::string>();
    }
    if (label.empty()) throw ValidationError("model_label is required");
    const gateway::ModelSpec* spec = nullptr;
    try {
      spec = &app_.config().model(label);
    } catch (const NotFoundError& e) {
      throw ValidationError(e.what());
    }
    auto session = engine_.new_session(*spec, app_.sheet());
    {
      std::lock_guard lock(mutex_);
      sessions_[session->id()] = session;
    }
    try {
      engine_.begin(*session);
    } catch (const game::SessionAborted& e) {
      if (e.reason() != game::AbortReason::refusal) {
        json j = session_json(*session);
        j["error"] = "provider";
        j["message"] = e.what();
        return Reply{502, j.dump()};
      }
    }
    return ok(session_json(*session));
  });
}

Reply PlayService::get_session(const std::string& id) const {
  return guarded([&] {
    if (auto s = find(id)) return ok(session_json(*s));
    if (auto r = app_.store().load(id)) return ok(record_json(*r));
    throw NotFoundError("unknown session " + id);
  });
}

Reply PlayService::choose(const std::string& id, std::string_view body) {
  return guarded([&] {
    auto s = find(id);
    if (!s) throw NotFoundError("unknown session " + id);
    const json req = parse_body(body);
    auto it = req.find("choice");
    if (it == req.end() || !it->is_number_integer()) throw ValidationError("choice must be an integer");
    try {
      engine_.choose(*s, it->get<int>());
    } catch (const game::SessionAborted& e) {
      json j = session_json(*s);
      j["error"] = "provider";
      j["message"] = e.what();
      return Reply{502, j.dump()};
    }
    return ok(session_json(*s));
  });
}

Reply PlayService::reset(const std::string& id) {
  return guarded([&] {
    auto s = find(id);
    if (!s) throw NotFoundError("unknown session " + id);
    engine_.reset(*s);
    return ok(session_json(*s));
  });
}

Reply PlayService::critique(const std::string& id, std::string_view body) {
  return guarded([&] {
    const json req = parse_body(body);
    const std::string critic = req.value("critic_label", std::string{});
    if (critic.empty()) throw ValidationError("critic_label is required");
    const std::string instruction = req.value("instruction", std::string(kDefaultCritiqueInstruction));
    try {
      app_.config().model(critic);
    } catch (const NotFoundError& e) {
      throw ValidationError(e.what());
    }
    const store::CritiqueRecord c = app::critique(app_, id, critic, instruction);
    return ok({{"session_id", id},
               {"critic_label", c.critic_label},
               {"text", c.text},
               {"self_critique", c.self_critique},
               {"created_at", format_timestamp(c.created_at)}});
  });
}

// ---------------------------------------------------------------------------

namespace {

void print_turn(const game::Turn& t, std::ostream& out) {
  out << "\n" << t.narration << "\n";
  if (!t.options.items.empty()) out << "\n" << game::render_options(t.options) << "\n";
  if (t.summary && t.summary != t.narration) out << "\n" << *t.summary << "\n";
}

}  // namespace

PlayResult play(App& app, const std::string& model_label, std::istream& in, std::ostream& out) {
  game::Engine engine(app.gateway(), &app.store(), app.engine_options());
  auto session = engine.new_session(app.config().model(model_label), app.sheet());
  PlayResult result;
  result.session_id = session->id();
  auto finish_result = [&] {
    result.state = session->state();
    result.choices = session->player_turns_used();
    return result;
  };
  const int n = session->sheet().option_count;

  try {
    print_turn(engine.begin(*session), out);
    while (!session->state().terminal()) {
      out << "\n[" << session->turns_remaining() << " left] choice 1-" << n << " or r to reset: " << std::flush;
      std::string token;
      if (!(in >> token)) {
        out << "\n";
        engine.reset(*session);
        break;
      }
      if (token == "r" || token == "R") {
        engine.reset(*session);
        break;
      }
      int choice = 0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), choice);
      if (ec != std::errc{} || ptr != token.data() + token.size() || choice < 1 || choice > n) {
        out << "enter a number from 1 to " << n << ", or r\n";
        continue;
      }
      print_turn(engine.choose(*session, choice), out);
    }
  } catch (const game::SessionAborted& e) {
    out << "\nsession aborted: " << e.what() << "\n";
    return finish_result();
  }
  if (session->state().kind == game::SessionState::Kind::aborted) out << "session reset\n";
  else out << "\ngame over\n";
  return finish_result();
}

// ---------------------------------------------------------------------------

std::string render_critique_prompt(const store::ProtocolRecord& record, std::string_view instruction) {
  std::string out = "Below is the protocol of a text adventure game. A language model acted as the narrator; "
                    "the player could only pick one of the numbered options.\n\n";
  for (const auto& e : record.events) {
    if (e.rejected) continue;
    if (e.role == EventRole::narrator) out += "Narrator:\n" + e.text + "\n\n";
    else if (e.role == EventRole::player) out += "Player: " + e.text + "\n\n";
  }
  out += std::string(instruction);
  return out;
}

store::CritiqueRecord critique(App& app, const std::string& session_id, const std::string& critic_label,
                               std::string_view instruction) {
  auto record = app.store().load(session_id);
  if (!record) throw StateError("session " + session_id + " is not a finalized protocol");
  const gateway::ModelSpec& critic = app.config().model(critic_label);
  const std::vector<gateway::ChatMessage> messages{{gateway::Role::user, render_critique_prompt(*record, instruction)}};
  gateway::ChatResult reply = app.gateway().chat(critic, messages);
  if (!reply.text) {
    throw ProviderError(std::string("critic returned no text (finish_reason=") + to_string(reply.finish_reason) + ")");
  }
  store::CritiqueRecord c;
  c.critic_label = critic_label;
  c.instruction = std::string(instruction);
  c.text = *reply.text;
  c.self_critique = critic_label == record->meta.model_label;
  c.created_at = app.hooks().clock();
  app.store().save_critique(session_id, c);
  return c;
}

}  // namespace narrator::app
