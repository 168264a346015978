#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mate::data {

/// Lowercases, drops punctuation other than apostrophes, and collapses runs
/// of whitespace to single spaces. Applied to every transcript before it is
/// tokenized, scored or aligned.
std::string normalize_text(std::string_view text);

/// Whitespace split of normalize_text(text).
std::vector<std::string> split_words(std::string_view text);

std::string join_words(const std::vector<std::string>& words);

}  // namespace mate::data
