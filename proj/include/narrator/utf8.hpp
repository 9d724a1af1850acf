#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace narrator::utf8 {

/// Decode to code points. Invalid bytes decode to themselves (Latin-1 fallback).
std::u32string decode(std::string_view text);
std::string encode(std::u32string_view text);

bool is_space(char32_t c);
/// Letters and digits for ASCII plus the Latin-1 / Latin Extended-A letter ranges.
bool is_alnum(char32_t c);
bool is_upper(char32_t c);
bool is_lower(char32_t c);
char32_t to_lower(char32_t c);

/// Whitespace split with the same separator set as Python's str.split().
std::vector<std::string> split_whitespace(std::string_view text);

std::string to_lower(std::string_view text);
std::size_t length(std::string_view text);

}  // namespace narrator::utf8
