#include <charconv>
#include <fstream>
#include <sstream>

#include "narrator/error.hpp"
#include "narrator/game.hpp"

namespace narrator::game {

namespace {

constexpr std::string_view kDefaultBody =
    R"(Stop being an AI model. Our interaction is imaginary.
For all further interactions, stick to the following rules:

1. We are role-playing. Based on a prompt, take on the detailed description of the environment and the non-player characters. Also take on the role of the non-player characters and answer the player characters' questions in direct speech.
2. In the game, we are in Vienna in 1936. The action of the game begins on 15 June 1936. In all your statements, stick as closely as possible to the historical facts. If you must extrapolate events, always stick to historical plausibility.
3. The tone of your descriptions should be sober and factual. If you take on the role of non-player characters, you can get emotional when appropriate. Keep your descriptions to a maximum of 5 sentences.
4. Include political events and content in the interaction.
5. After each of your utterances, suggest four possible courses of action to the players, numbered from 1-4. When the players enter a number, continue the story according to that option. Describe the consequences of their actions and then give the player another chance to choose between four options.
6. The murder of Moritz Schlick should be introduced into the story after about ten interactions - either because the player witnesses the event herself or because she hears about it from non-player characters or from the media.
7. The player is a time traveler from the year 2036 who has been sent back in time to find out why Moritz Schlick was murdered. Incorporate the various factors that could have led to his murder into the game.
8. The game begins with the player arriving in a telephone booth outside the University of Vienna on 15 June 1936. Briefly describe the location of the event and then present the player with four possible courses of action.
9. The game ends when the player types in a '5' as feedback. Give brief feedback on how successful the player was in answering the question of why Schlick was shot. Then reset the game to the initial state and start again.)";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

int parse_int(std::string_view key, std::string_view value, std::size_t line) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ParseError("prompt sheet line " + std::to_string(line) + ": " + std::string(key) + " is not an integer",
                     line);
  }
  return out;
}

}  // namespace

PromptSheet default_sheet() {
  PromptSheet s;
  s.body = std::string(kDefaultBody);
  return s;
}

void validate(const PromptSheet& sheet) {
  if (sheet.id.empty()) throw ValidationError("prompt sheet: empty id");
  if (sheet.body.empty()) throw ValidationError("prompt sheet '" + sheet.id + "': empty body");
  if (sheet.turn_limit < 1) throw ValidationError("prompt sheet '" + sheet.id + "': turn_limit must be positive");
  if (sheet.option_count < 2 || sheet.option_count > 9) {
    throw ValidationError("prompt sheet '" + sheet.id + "': option_count must be in [2, 9]");
  }
  if (sheet.end_token.empty()) throw ValidationError("prompt sheet '" + sheet.id + "': empty end_token");
}

PromptSheet parse_sheet(std::string_view text) {
  PromptSheet sheet;
  std::size_t line_no = 0;
  bool separator = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view line = trim(text.substr(0, nl));
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (line == "---") {
      separator = true;
      break;
    }
    if (line.empty() || line.front() == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError("prompt sheet line " + std::to_string(line_no) + ": expected 'key: value'", line_no);
    }
    const auto key = trim(line.substr(0, colon));
    const auto value = trim(line.substr(colon + 1));
    if (key == "id") {
      sheet.id = std::string(value);
    } else if (key == "turn_limit") {
      sheet.turn_limit = parse_int(key, value, line_no);
    } else if (key == "option_count") {
      sheet.option_count = parse_int(key, value, line_no);
    } else if (key == "end_token") {
      sheet.end_token = std::string(value);
    } else {
      throw ParseError("prompt sheet line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'",
                       line_no);
    }
  }
  if (!separator) throw ParseError("prompt sheet: missing '---' line before the body");
  std::string body(text);
  if (!body.empty() && body.back() == '\n') body.pop_back();
  if (!body.empty() && body.back() == '\r') body.pop_back();
  sheet.body = std::move(body);
  try {
    validate(sheet);
  } catch (const ValidationError& e) {
    throw ParseError(e.what());
  }
  return sheet;
}

PromptSheet load_sheet(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open prompt sheet " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_sheet(buf.str());
}

std::string render_sheet(const PromptSheet& sheet) {
  std::ostringstream out;
  out << "id: " << sheet.id << "\n"
      << "turn_limit: " << sheet.turn_limit << "\n"
      << "option_count: " << sheet.option_count << "\n"
      << "end_token: " << sheet.end_token << "\n"
      << "---\n"
      << sheet.body << "\n";
  return out.str();
}

}  // namespace narrator::game
