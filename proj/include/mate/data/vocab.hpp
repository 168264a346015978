#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mate::data {

struct TokenSequence {
  std::vector<int> ids;

  std::size_t length() const noexcept { return ids.size(); }
};

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kReservedCount = 5;

  /// Reserved tokens only.
  Vocab();

  /// `tokens` must start with the five reserved tokens and contain no duplicates.
  static Vocab from_tokens(std::vector<std::string> tokens);
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int id(std::string_view word) const;
  const std::string& token(int id) const;
  bool contains(std::string_view word) const;
  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  /// FNV-1a over the newline-joined token list; recorded in checkpoints.
  std::uint64_t fingerprint() const noexcept;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Reserved tokens, then every word occurring at least min_count times ordered
/// by (frequency desc, word asc). Throws std::invalid_argument on an empty list.
Vocab build_vocab(const std::vector<std::string>& texts, std::size_t min_count);

/// Normalized whitespace split; unknown words become [UNK]. No [CLS]/[SEP].
TokenSequence tokenize(std::string_view text, const Vocab& vocab);
std::string detokenize(const TokenSequence& tokens, const Vocab& vocab);

}  // namespace mate::data
