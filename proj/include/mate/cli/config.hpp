#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mate::cli {

/// Bad flags, unknown keys or malformed values; maps to exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat key=value configuration. Later layers override earlier ones; only
/// keys present in the defaults layer are accepted.
class RunConfig {
 public:
  explicit RunConfig(std::map<std::string, std::string> defaults);

  /// '#' starts a comment; blank lines are skipped; whitespace around keys
  /// and values is trimmed. Throws UsageError on unknown keys or bad lines.
  void merge_file(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  const std::string& str(const std::string& key) const;
  std::string required(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  /// Comma-separated list; empty entries dropped.
  std::vector<std::string> list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// 64-bit FNV-1a of a file's bytes as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace mate::cli
