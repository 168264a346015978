#pragma once

#include <cstddef>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mate::eval {

struct ErrorCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_words = 0;

  std::size_t errors() const noexcept { return substitutions + insertions + deletions; }
  /// errors / max(ref_words, 1).
  double rate() const noexcept;
  ErrorCounts& operator+=(const ErrorCounts& o) noexcept;
};

/// Levenshtein alignment with unit costs. Among equal-cost alignments the
/// backtrace prefers substitution (or match), then insertion, then deletion.
ErrorCounts align_words(const std::vector<std::string>& reference,
                        const std::vector<std::string>& hypothesis);

/// Normalized whitespace words of both strings, then align_words.
ErrorCounts wer(std::string_view reference, std::string_view hypothesis);

/// wer after dropping blocklisted words from both sides.
ErrorCounts cwer(std::string_view reference, std::string_view hypothesis,
                 const std::set<std::string>& blocklist);

/// One word per line; blank lines ignored.
std::set<std::string> load_blocklist(const std::string& path);

}  // namespace mate::eval
