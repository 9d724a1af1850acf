#include "narrator/sentiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "narrator/error.hpp"
#include "narrator/utf8.hpp"

namespace narrator::sentiment {

Lexicon::Lexicon(std::unordered_map<std::string, double> valences, std::string source)
    : valences_(std::move(valences)), source_(std::move(source)) {}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  while (true) {
    const auto tab = line.find('\t');
    fields.push_back(line.substr(0, tab));
    if (tab == std::string_view::npos) break;
    line.remove_prefix(tab + 1);
  }
  return fields;
}

std::string_view strip(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Lexicon Lexicon::parse(std::string_view text, Options options) {
  Lexicon lex;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = strip(text.substr(0, nl));
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (line.empty()) continue;

    const auto fields = split_tabs(line);
    const auto where = "lexicon line " + std::to_string(line_no);
    if (fields.size() < 2 || fields[0].empty()) throw ParseError(where + ": expected term<TAB>valence", line_no);
    double valence = 0.0;
    const auto v = fields[1];
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), valence);
    if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(valence)) {
      throw ParseError(where + ": non-numeric valence '" + std::string(v) + "'", line_no);
    }
    const auto [it, inserted] = lex.valences_.insert_or_assign(std::string(fields[0]), valence);
    if (!inserted) {
      if (!options.allow_duplicates) {
        throw ParseError(where + ": duplicate term '" + it->first + "'", line_no);
      }
      ++lex.duplicates_;
    }
  }
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path, Options options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open lexicon " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  Lexicon lex = parse(buf.str(), options);
  lex.source_ = path.string();
  return lex;
}

const double* Lexicon::find(std::string_view term) const {
  const auto it = valences_.find(std::string(term));
  return it == valences_.end() ? nullptr : &it->second;
}

SentimentConfig SentimentConfig::reference() {
  SentimentConfig c;
  c.negation_terms = {
      "aint",    "arent",   "cannot",   "cant",     "couldnt", "darent",  "didnt",   "doesnt",  "ain't",
      "aren't",  "can't",   "couldn't", "daren't",  "didn't",  "doesn't", "dont",    "hadnt",   "hasnt",
      "havent",  "isnt",    "mightnt",  "mustnt",   "neither", "don't",   "hadn't",  "hasn't",  "haven't",
      "isn't",   "mightn't", "mustn't", "neednt",   "needn't", "never",   "none",    "nope",    "nor",
      "not",     "nothing", "nowhere",  "oughtnt",  "shant",   "shouldnt", "uhuh",   "wasnt",   "werent",
      "oughtn't", "shan't", "shouldn't", "uh-uh",   "wasn't",  "weren't", "without", "wont",    "wouldnt",
      "won't",   "wouldn't", "rarely",  "seldom",   "despite"};
  const double up = c.booster_increment;
  const double down = -c.booster_increment;
  for (const char* w :
       {"absolutely", "amazingly",   "awfully",      "completely",  "considerable", "considerably", "decidedly",
        "deeply",     "effing",      "enormous",     "enormously",  "entirely",     "especially",   "exceptional",
        "exceptionally", "extreme",  "extremely",    "fabulously",  "flipping",     "flippin",      "frackin",
        "fracking",   "fricking",    "frickin",      "frigging",    "friggin",      "fully",        "fuckin",
        "fucking",    "fuggin",      "fugging",      "greatly",     "hella",        "highly",       "hugely",
        "incredible", "incredibly",  "intensely",    "major",       "majorly",      "more",         "most",
        "particularly", "purely",    "quite",        "really",      "remarkably",   "so",           "substantially",
        "thoroughly", "total",       "totally",      "tremendous",  "tremendously", "uber",         "unbelievably",
        "unusually",  "utter",       "utterly",      "very"}) {
    c.booster_map[w] = up;
  }
  for (const char* w : {"almost", "barely", "hardly", "just enough", "kind of", "kinda", "kindof", "kind-of", "less",
                        "little", "marginal", "marginally", "occasional", "occasionally", "partly", "scarce",
                        "scarcely", "slight", "slightly", "somewhat", "sort of", "sorta", "sortof", "sort-of"}) {
    c.booster_map[w] = down;
  }
  c.special_cases = {{"the shit", 3.0},   {"the bomb", 3.0},       {"bad ass", 1.5},    {"badass", 1.5},
                     {"bus stop", 0.0},   {"yeah right", -2.0},    {"kiss of death", -1.5},
                     {"to die for", 3.0}, {"beating heart", 3.5}};
  return c;
}

double normalize(double sum, double alpha) {
  const double v = sum / std::sqrt(sum * sum + alpha);
  return std::clamp(v, -1.0, 1.0);
}

Polarity classify(double compound) {
  if (compound > 0.05) return Polarity::positive;
  if (compound < -0.05) return Polarity::negative;
  return Polarity::neutral;
}

const char* to_string(Polarity p) {
  switch (p) {
    case Polarity::positive:
      return "positive";
    case Polarity::negative:
      return "negative";
    case Polarity::neutral:
      break;
  }
  return "neutral";
}

namespace {

bool is_punct(char32_t c) { return c < 0x80 && std::ispunct(static_cast<int>(c)); }

// Python str.isupper(): at least one cased character and no lowercase ones.
bool is_all_caps(std::string_view word) {
  bool cased = false;
  for (char32_t c : utf8::decode(word)) {
    if (utf8::is_lower(c)) return false;
    cased = cased || utf8::is_upper(c);
  }
  return cased;
}

std::string strip_punct_if_word(const std::string& token) {
  const std::u32string cps = utf8::decode(token);
  std::size_t first = 0;
  std::size_t last = cps.size();
  while (first < last && is_punct(cps[first])) ++first;
  while (last > first && is_punct(cps[last - 1])) --last;
  if (last - first <= 2) return token;
  return utf8::encode(std::u32string_view(cps).substr(first, last - first));
}

class Scorer {
 public:
  Scorer(std::string_view text, const Lexicon& lex, const SentimentConfig& cfg)
      : lex_(lex), cfg_(cfg), text_(text), tokens_(tokenize(text)) {
    lower_.reserve(tokens_.size());
    std::size_t caps = 0;
    for (const auto& t : tokens_) {
      lower_.push_back(utf8::to_lower(t));
      if (is_all_caps(t)) ++caps;
    }
    // Caps emphasis only counts when some, but not all, tokens are ALL CAPS.
    const std::size_t diff = tokens_.size() - caps;
    cap_diff_ = diff > 0 && diff < tokens_.size();
  }

  SentimentScore run() {
    std::vector<double> sentiments;
    sentiments.reserve(tokens_.size());
    const std::size_t n = tokens_.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (cfg_.booster_map.count(lower_[i])) {
        sentiments.push_back(0.0);
        continue;
      }
      if (i + 1 < n && lower_[i] == "kind" && lower_[i + 1] == "of") {
        sentiments.push_back(0.0);
        continue;
      }
      sentiments.push_back(valence_at(i));
    }
    but_check(sentiments);
    return aggregate(sentiments);
  }

 private:
  bool in_lexicon(std::size_t i) const { return lex_.contains(lower_[i]); }

  bool negated(const std::string& word) const {
    return cfg_.negation_terms.count(word) > 0 || word.find("n't") != std::string::npos;
  }

  double scalar_inc_dec(std::size_t j, double valence) const {
    const auto it = cfg_.booster_map.find(lower_[j]);
    if (it == cfg_.booster_map.end()) return 0.0;
    double scalar = it->second;
    if (valence < 0) scalar *= -1;
    if (is_all_caps(tokens_[j]) && cap_diff_) scalar += valence > 0 ? cfg_.caps_boost : -cfg_.caps_boost;
    return scalar;
  }

  double valence_at(std::size_t i) {
    const double* base = lex_.find(lower_[i]);
    if (base == nullptr) return 0.0;
    const std::size_t n = tokens_.size();
    double v = *base;

    // "no" directly before another lexicon word acts as a negation, not a valence.
    if (lower_[i] == "no" && i + 1 < n && in_lexicon(i + 1)) v = 0.0;
    if ((i > 0 && lower_[i - 1] == "no") || (i > 1 && lower_[i - 2] == "no") ||
        (i > 2 && lower_[i - 3] == "no" && (lower_[i - 1] == "or" || lower_[i - 1] == "nor"))) {
      v = *base * cfg_.negation_factor;
    }
    if (is_all_caps(tokens_[i]) && cap_diff_) v += v > 0 ? cfg_.caps_boost : -cfg_.caps_boost;

    for (std::size_t start = 0; start < 3; ++start) {
      if (i > start && !in_lexicon(i - start - 1)) {
        double s = scalar_inc_dec(i - start - 1, v);
        if (start == 1 && s != 0) s *= 0.95;
        if (start == 2 && s != 0) s *= 0.9;
        v += s;
        v = negation_check(v, start, i);
        if (start == 2) v = special_idioms(v, i);
      }
    }
    return least_check(v, i);
  }

  double negation_check(double v, std::size_t start, std::size_t i) const {
    const auto& l = lower_;
    if (start == 0) {
      if (negated(l[i - 1])) v *= cfg_.negation_factor;
    } else if (start == 1) {
      if (l[i - 2] == "never" && (l[i - 1] == "so" || l[i - 1] == "this")) {
        v *= 1.25;
      } else if (l[i - 2] == "without" && l[i - 1] == "doubt") {
      } else if (negated(l[i - 2])) {
        v *= cfg_.negation_factor;
      }
    } else {
      if ((l[i - 3] == "never" && (l[i - 2] == "so" || l[i - 2] == "this")) || (l[i - 1] == "so" || l[i - 1] == "this")) {
        v *= 1.25;
      } else if (l[i - 3] == "without" && (l[i - 2] == "doubt" || l[i - 1] == "doubt")) {
      } else if (negated(l[i - 3])) {
        v *= cfg_.negation_factor;
      }
    }
    return v;
  }

  double special_idioms(double v, std::size_t i) const {
    const auto& l = lower_;
    const std::string onezero = l[i - 1] + " " + l[i];
    const std::string twoonezero = l[i - 2] + " " + l[i - 1] + " " + l[i];
    const std::string twoone = l[i - 2] + " " + l[i - 1];
    const std::string threetwoone = l[i - 3] + " " + l[i - 2] + " " + l[i - 1];
    const std::string threetwo = l[i - 3] + " " + l[i - 2];
    for (const std::string* seq : {&onezero, &twoonezero, &twoone, &threetwoone, &threetwo}) {
      const auto it = cfg_.special_cases.find(*seq);
      if (it != cfg_.special_cases.end()) {
        v = it->second;
        break;
      }
    }
    if (l.size() - 1 > i) {
      const auto it = cfg_.special_cases.find(l[i] + " " + l[i + 1]);
      if (it != cfg_.special_cases.end()) v = it->second;
    }
    if (l.size() - 1 > i + 1) {
      const auto it = cfg_.special_cases.find(l[i] + " " + l[i + 1] + " " + l[i + 2]);
      if (it != cfg_.special_cases.end()) v = it->second;
    }
    for (const std::string* gram : {&threetwoone, &threetwo, &twoone}) {
      const auto it = cfg_.booster_map.find(*gram);
      if (it != cfg_.booster_map.end()) v += it->second;
    }
    return v;
  }

  double least_check(double v, std::size_t i) const {
    const auto& l = lower_;
    if (i > 1 && !in_lexicon(i - 1) && l[i - 1] == "least") {
      if (l[i - 2] != "at" && l[i - 2] != "very") v *= cfg_.negation_factor;
    } else if (i > 0 && !in_lexicon(i - 1) && l[i - 1] == "least") {
      v *= cfg_.negation_factor;
    }
    return v;
  }

  // Re-weights around the first "but". Positions are looked up by value (first
  // equal entry), exactly as the reference implementation does.
  void but_check(std::vector<double>& s) const {
    const auto bit = std::find(lower_.begin(), lower_.end(), "but");
    if (bit == lower_.end()) return;
    const auto bi = static_cast<std::size_t>(bit - lower_.begin());
    for (std::size_t pos = 0; pos < s.size(); ++pos) {
      const double value = s[pos];
      const auto si = static_cast<std::size_t>(std::find(s.begin(), s.end(), value) - s.begin());
      if (si < bi) {
        s[si] = value * cfg_.but_before;
      } else if (si > bi) {
        s[si] = value * cfg_.but_after;
      }
    }
  }

  double punctuation_emphasis() const {
    const auto ep = std::min<std::ptrdiff_t>(std::count(text_.begin(), text_.end(), '!'), cfg_.max_exclamations);
    const auto qm = std::count(text_.begin(), text_.end(), '?');
    double qm_amp = 0.0;
    if (qm > 1) qm_amp = qm <= 3 ? qm * cfg_.question_increment : cfg_.question_cap;
    return ep * cfg_.exclamation_increment + qm_amp;
  }

  SentimentScore aggregate(const std::vector<double>& sentiments) const {
    SentimentScore out;
    if (sentiments.empty()) return out;
    double sum = 0.0;
    for (double s : sentiments) sum += s;
    const double punct = punctuation_emphasis();
    if (sum > 0) {
      sum += punct;
    } else if (sum < 0) {
      sum -= punct;
    }
    out.compound = normalize(sum, cfg_.alpha);

    // Each non-neutral token also carries one unit of neutral mass, hence the +/-1.
    double pos_sum = 0.0;
    double neg_sum = 0.0;
    double neu_count = 0.0;
    for (double s : sentiments) {
      if (s > 0) pos_sum += s + 1;
      if (s < 0) neg_sum += s - 1;
      if (s == 0) neu_count += 1;
    }
    if (pos_sum > std::fabs(neg_sum)) {
      pos_sum += punct;
    } else if (pos_sum < std::fabs(neg_sum)) {
      neg_sum -= punct;
    }
    const double total = pos_sum + std::fabs(neg_sum) + neu_count;
    out.pos = std::fabs(pos_sum / total);
    out.neg = std::fabs(neg_sum / total);
    out.neu = std::fabs(neu_count / total);
    return out;
  }

  const Lexicon& lex_;
  const SentimentConfig& cfg_;
  std::string_view text_;
  std::vector<std::string> tokens_;
  std::vector<std::string> lower_;
  bool cap_diff_ = false;
};

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens = utf8::split_whitespace(text);
  for (auto& t : tokens) t = strip_punct_if_word(t);
  return tokens;
}

SentimentScore score(std::string_view text, const Lexicon& lexicon, const SentimentConfig& config) {
  return Scorer(text, lexicon, config).run();
}

}  // namespace narrator::sentiment
