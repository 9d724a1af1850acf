#pragma once

// Rule-based lexicon sentiment scoring (VADER, Hutto & Gilbert 2014).
//
// Token valences come from a human-rated lexicon and are adjusted by booster
// words, negations, ALL-CAPS emphasis, the contrastive "but" and trailing
// punctuation. The summed valence is squashed into (-1, 1) as the compound score.

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace narrator::sentiment {

class Lexicon {
 public:
  struct Options {
    /// The published lexicon repeats a handful of terms; the last rating wins when allowed.
    bool allow_duplicates = false;
  };

  Lexicon() = default;
  explicit Lexicon(std::unordered_map<std::string, double> valences, std::string source = {});

  /// Tab-separated: term, mean valence, standard deviation, raw ratings.
  static Lexicon parse(std::string_view text, Options options);
  static Lexicon parse(std::string_view text) { return parse(text, Options{}); }
  static Lexicon load(const std::filesystem::path& path, Options options);
  static Lexicon load(const std::filesystem::path& path) { return load(path, Options{}); }

  const double* find(std::string_view term) const;
  bool contains(std::string_view term) const { return find(term) != nullptr; }
  std::size_t size() const { return valences_.size(); }
  const std::string& source() const { return source_; }
  std::size_t duplicates() const { return duplicates_; }

 private:
  std::unordered_map<std::string, double> valences_;
  std::string source_;
  std::size_t duplicates_ = 0;
};

struct SentimentConfig {
  double alpha = 15.0;
  double booster_increment = 0.293;
  double negation_factor = -0.74;
  double caps_boost = 0.733;
  double exclamation_increment = 0.292;
  int max_exclamations = 4;
  double question_increment = 0.18;
  double question_cap = 0.96;
  double but_before = 0.5;
  double but_after = 1.5;
  std::set<std::string> negation_terms;
  std::map<std::string, double> booster_map;
  std::map<std::string, double> special_cases;

  /// Constants, negations, boosters and idioms of the reference algorithm.
  static SentimentConfig reference();
};

struct SentimentScore {
  double pos = 0.0;
  double neu = 1.0;
  double neg = 0.0;
  double compound = 0.0;
};

enum class Polarity { positive, neutral, negative };

/// sum / sqrt(sum^2 + alpha), clamped to [-1, 1].
double normalize(double sum, double alpha = 15.0);

/// Positive above 0.05, negative below -0.05, neutral otherwise.
Polarity classify(double compound);
const char* to_string(Polarity p);

SentimentScore score(std::string_view text, const Lexicon& lexicon, const SentimentConfig& config);

/// Tokens as the scorer sees them: whitespace split, edge punctuation stripped
/// unless that would leave two or fewer characters (keeps emoticons).
std::vector<std::string> tokenize(std::string_view text);

}  // namespace narrator::sentiment
