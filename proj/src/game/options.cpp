#include <algorithm>
#include <sstream>

#include "narrator/game.hpp"
#include "narrator/utf8.hpp"

namespace narrator::game {

namespace {

bool is_blank_char(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_blank_char(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_blank_char(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  while (true) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  return lines;
}

}  // namespace

std::optional<Option> match_option_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::size_t i = 0;
  while (i < line.size() && is_blank_char(line[i])) ++i;
  if (i + 2 >= line.size()) return std::nullopt;
  if (line[i] < '1' || line[i] > '9') return std::nullopt;
  const int number = line[i] - '0';
  const char marker = line[i + 1];
  if (marker != '.' && marker != ')' && marker != ':') return std::nullopt;
  if (!is_blank_char(line[i + 2])) return std::nullopt;
  const std::string_view label = trim(line.substr(i + 2));
  if (label.empty()) return std::nullopt;
  return Option{number, std::string(label)};
}

ParsedReply parse_options(std::string_view reply, int option_count) {
  const auto lines = split_lines(reply);
  std::size_t end = lines.size();
  while (end > 0 && trim(lines[end - 1]).empty()) --end;

  std::size_t start = end;
  std::vector<Option> found;
  while (start > 0) {
    const auto line = lines[start - 1];
    if (trim(line).empty()) {
      --start;
      continue;
    }
    auto opt = match_option_line(line);
    if (!opt) break;
    found.push_back(std::move(*opt));
    --start;
  }
  std::reverse(found.begin(), found.end());
  // Blank lines directly above the block belong to the narration's spacing, not the block.
  while (start < end && trim(lines[start]).empty()) ++start;

  bool consecutive = static_cast<int>(found.size()) == option_count;
  for (std::size_t k = 0; consecutive && k < found.size(); ++k) {
    consecutive = found[k].number == static_cast<int>(k) + 1;
  }
  if (!consecutive) {
    std::ostringstream msg;
    msg << "expected options 1-" << option_count << ", found " << found.size() << " numbered line(s)";
    throw OptionParseError(msg.str(), std::move(found));
  }

  std::string narration;
  for (std::size_t k = 0; k < start; ++k) {
    if (k > 0) narration += '\n';
    narration += lines[k];
  }
  while (!narration.empty() && (is_blank_char(narration.back()) || narration.back() == '\n')) narration.pop_back();
  return {std::move(narration), OptionSet{std::move(found)}};
}

std::string render_options(const OptionSet& options) {
  std::string out;
  for (const auto& o : options.items) {
    if (!out.empty()) out += '\n';
    out += std::to_string(o.number) + ". " + o.label;
  }
  return out;
}

bool detect_refusal(std::string_view text, int option_count, const RefusalPatterns& patterns) {
  if (trim(text).find_first_not_of('\n') == std::string_view::npos) return true;
  std::string head = utf8::to_lower(text.substr(0, std::min(text.size(), patterns.window)));
  // Typographic apostrophes are common in model output.
  for (std::size_t pos = head.find("\xE2\x80\x99"); pos != std::string::npos; pos = head.find("\xE2\x80\x99", pos)) {
    head.replace(pos, 3, "'");
  }
  const bool stem_hit = std::any_of(patterns.stems.begin(), patterns.stems.end(),
                                    [&](const std::string& s) { return head.find(s) != std::string::npos; });
  if (!stem_hit) return false;
  try {
    parse_options(text, option_count);
    return false;
  } catch (const OptionParseError&) {
    return true;
  }
}

}  // namespace narrator::game
