#pragma once

#include <string>
#include <vector>

namespace narrator {

struct LabeledText {
  std::string model_label;
  std::string text;
  std::string source_id;  // session id the text came from
};

/// Texts grouped by model in configuration order, collection order within a model.
using LabeledTexts = std::vector<LabeledText>;

}  // namespace narrator
