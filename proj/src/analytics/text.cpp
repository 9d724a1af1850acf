#include "narrator/analytics/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "narrator/error.hpp"
#include "narrator/utf8.hpp"

namespace narrator::analytics {

std::size_t word_count(std::string_view text) {
  std::size_t count = 0;
  bool in_run = false;
  bool run_has_alnum = false;
  for (char32_t c : utf8::decode(text)) {
    if (utf8::is_space(c)) {
      if (in_run && run_has_alnum) ++count;
      in_run = false;
      run_has_alnum = false;
    } else {
      in_run = true;
      run_has_alnum = run_has_alnum || utf8::is_alnum(c);
    }
  }
  if (in_run && run_has_alnum) ++count;
  return count;
}

namespace {

// Code point ending just before byte offset `pos`.
char32_t code_point_before(std::string_view s, std::size_t pos) {
  std::size_t start = pos;
  do {
    --start;
  } while (start > 0 && (static_cast<unsigned char>(s[start]) & 0xC0) == 0x80 && pos - start < 4);
  const auto cps = utf8::decode(s.substr(start, pos - start));
  return cps.empty() ? U' ' : cps.back();
}

char32_t code_point_at(std::string_view s, std::size_t pos) {
  const auto cps = utf8::decode(s.substr(pos, std::min<std::size_t>(4, s.size() - pos)));
  return cps.empty() ? U' ' : cps.front();
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

bool contains_word(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + 1)) {
    const bool left_ok = pos == 0 || !utf8::is_alnum(code_point_before(haystack, pos));
    const std::size_t end = pos + needle.size();
    const bool right_ok = end >= haystack.size() || !utf8::is_alnum(code_point_at(haystack, end));
    if (left_ok && right_ok) return true;
  }
  return false;
}

Gazetteer::Gazetteer(std::vector<Entry> entries) : entries_(std::move(entries)) {
  std::set<std::string> seen_forms;
  std::set<std::string> seen_names;
  for (const auto& e : entries_) {
    if (e.canonical.empty()) throw ValidationError("gazetteer: empty canonical name");
    if (!seen_names.insert(e.canonical).second) {
      throw ValidationError("gazetteer: duplicate canonical name '" + e.canonical + "'");
    }
    if (e.surface_forms.empty()) throw ValidationError("gazetteer: no surface forms for '" + e.canonical + "'");
    for (const auto& f : e.surface_forms) {
      if (!seen_forms.insert(f).second) throw ValidationError("gazetteer: surface form '" + f + "' listed twice");
    }
  }
}

Gazetteer Gazetteer::parse(std::string_view text) {
  std::vector<Entry> entries;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("gazetteer line " + std::to_string(line_no) + ": missing tab", line_no);
    Entry e;
    e.canonical = trim(std::string_view(line).substr(0, tab));
    std::string_view forms = std::string_view(line).substr(tab + 1);
    while (!forms.empty()) {
      const auto bar = forms.find('|');
      std::string form = trim(forms.substr(0, bar));
      if (!form.empty()) e.surface_forms.push_back(std::move(form));
      if (bar == std::string_view::npos) break;
      forms.remove_prefix(bar + 1);
    }
    if (e.canonical.empty() || e.surface_forms.empty()) {
      throw ParseError("gazetteer line " + std::to_string(line_no) + ": empty name or forms", line_no);
    }
    entries.push_back(std::move(e));
  }
  try {
    return Gazetteer(std::move(entries));
  } catch (const ValidationError& e) {
    throw ParseError(e.what());
  }
}

Gazetteer Gazetteer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open gazetteer " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

bool Gazetteer::covers(std::string_view word) const {
  for (const auto& e : entries_) {
    for (const auto& f : e.surface_forms) {
      if (contains_word(f, word)) return true;
    }
  }
  return false;
}

std::vector<std::string> Gazetteer::mentioned(std::string_view text) const {
  std::vector<std::string> names;
  for (const auto& e : entries_) {
    const bool hit = std::any_of(e.surface_forms.begin(), e.surface_forms.end(),
                                 [&](const std::string& f) { return contains_word(text, f); });
    if (hit) names.push_back(e.canonical);
  }
  return names;
}

std::size_t MentionTable::count(const std::string& model, const std::string& name) const {
  const auto m = counts.find(model);
  if (m == counts.end()) return 0;
  const auto n = m->second.find(name);
  return n == m->second.end() ? 0 : n->second;
}

MentionTable person_mentions(const LabeledTexts& texts, const Gazetteer& gazetteer) {
  MentionTable table;
  for (const auto& e : gazetteer.entries()) {
    table.names.push_back(e.canonical);
    table.totals[e.canonical] = 0;
  }
  for (const auto& t : texts) {
    if (!table.texts_per_model.count(t.model_label)) {
      table.models.push_back(t.model_label);
      table.texts_per_model[t.model_label] = 0;
      for (const auto& name : table.names) table.counts[t.model_label][name] = 0;
    }
    ++table.texts_per_model[t.model_label];
    for (const auto& name : gazetteer.mentioned(t.text)) {
      ++table.counts[t.model_label][name];
      ++table.totals[name];
    }
  }
  return table;
}

namespace {

bool starts_upper(std::string_view word) {
  const auto cps = utf8::decode(word);
  return !cps.empty() && utf8::is_upper(cps.front());
}

bool is_ascii_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<BigramCount> unknown_capitalized_bigrams(const LabeledTexts& texts, const Gazetteer& gazetteer) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts) {
    std::set<std::string> in_text;
    const auto tokens = utf8::split_whitespace(t.text);
    std::string prev;
    bool prev_clean = false;
    for (const auto& raw : tokens) {
      std::string_view tok = raw;
      while (!tok.empty() && is_ascii_punct(tok.front())) tok.remove_prefix(1);
      std::string_view core = tok;
      while (!core.empty() && is_ascii_punct(core.back())) core.remove_suffix(1);
      const bool trailing_punct = core.size() != tok.size();
      const bool cap = starts_upper(core);
      if (cap && prev_clean) {
        const std::string bigram = prev + " " + std::string(core);
        if (!gazetteer.covers(prev) && !gazetteer.covers(core)) in_text.insert(bigram);
      }
      prev_clean = cap && !trailing_punct;
      prev = std::string(core);
    }
    for (const auto& b : in_text) ++counts[b];
  }
  std::vector<BigramCount> out;
  for (const auto& [bigram, n] : counts) out.push_back({bigram, n});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.texts > b.texts; });
  return out;
}

}  // namespace narrator::analytics
