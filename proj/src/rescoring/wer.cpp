#include "mate/rescoring/wer.hpp"

#include <algorithm>
#include <fstream>

#include "mate/data/errors.hpp"
#include "mate/data/text.hpp"

namespace mate::eval {

double ErrorCounts::rate() const noexcept {
  return static_cast<double>(errors()) / static_cast<double>(std::max<std::size_t>(ref_words, 1));
}

ErrorCounts& ErrorCounts::operator+=(const ErrorCounts& o) noexcept {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  ref_words += o.ref_words;
  return *this;
}

ErrorCounts align_words(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  // cost[i][j]: edits turning ref[0,i) into hyp[0,j).
  std::vector<std::size_t> cost((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return cost[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  }

  ErrorCounts out;
  out.ref_words = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        if (!same) ++out.substitutions;
        --i;
        --j;
        continue;
      }
    }
    if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++out.insertions;
      --j;
    } else {
      ++out.deletions;
      --i;
    }
  }
  return out;
}

ErrorCounts wer(std::string_view reference, std::string_view hypothesis) {
  return align_words(data::split_words(reference),
                     data::split_words(hypothesis));
}

ErrorCounts cwer(std::string_view reference, std::string_view hypothesis,
                 const std::set<std::string>& blocklist) {
  auto filtered = [&](std::string_view text) {
    auto words = data::split_words(text);
    std::erase_if(words, [&](const std::string& w) { return blocklist.contains(w); });
    return words;
  };
  return align_words(filtered(reference), filtered(hypothesis));
}

std::set<std::string> load_blocklist(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open blocklist " + path);
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    for (auto& w : data::split_words(line)) out.insert(std::move(w));
  }
  return out;
}

}  // namespace mate::eval
