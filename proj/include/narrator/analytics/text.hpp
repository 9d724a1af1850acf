#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "narrator/labeled_texts.hpp"

namespace narrator::analytics {

/// Maximal runs of non-whitespace containing at least one letter or digit.
std::size_t word_count(std::string_view text);

/// Canonical person name -> surface forms. Matching is case-sensitive, whole word.
class Gazetteer {
 public:
  struct Entry {
    std::string canonical;
    std::vector<std::string> surface_forms;
  };

  Gazetteer() = default;
  explicit Gazetteer(std::vector<Entry> entries);

  /// Lines of `canonical<TAB>form1|form2|...`; `#` starts a comment.
  static Gazetteer parse(std::string_view text);
  static Gazetteer load(const std::filesystem::path& path);

  const std::vector<Entry>& entries() const { return entries_; }
  bool covers(std::string_view word) const;
  /// Canonical names mentioned at least once in `text`, in gazetteer order.
  std::vector<std::string> mentioned(std::string_view text) const;

 private:
  std::vector<Entry> entries_;
};

/// Whole-word, case-sensitive occurrence of `needle` in `haystack`.
bool contains_word(std::string_view haystack, std::string_view needle);

struct MentionTable {
  std::vector<std::string> models;  // row order
  std::vector<std::string> names;   // column order (gazetteer order)
  std::map<std::string, std::size_t> texts_per_model;
  // counts[model][name] = number of texts with at least one mention
  std::map<std::string, std::map<std::string, std::size_t>> counts;
  std::map<std::string, std::size_t> totals;

  std::size_t count(const std::string& model, const std::string& name) const;
};

MentionTable person_mentions(const LabeledTexts& texts, const Gazetteer& gazetteer);

struct BigramCount {
  std::string bigram;
  std::size_t texts = 0;
};

/// Pairs of adjacent capitalized words not covered by the gazetteer, most frequent first.
/// Candidates for invented or unlisted persons.
std::vector<BigramCount> unknown_capitalized_bigrams(const LabeledTexts& texts, const Gazetteer& gazetteer);

}  // namespace narrator::analytics
