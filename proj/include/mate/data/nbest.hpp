#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mate::data {

struct Hypothesis {
  std::string text;
  double first_pass_score = 0.0;  // log domain, higher is better
  int original_rank = 0;          // 0 = first-pass best
};

struct NBestEntry {
  std::string utterance_id;
  std::string reference;
  std::string features_path;
  std::vector<Hypothesis> hypotheses;
};

/// One paired training utterance.
struct TrainPair {
  std::string utterance_id;
  std::string text;
  std::string features_path;
};

/// JSON Lines; array order of "hypotheses" defines original_rank. Errors name
/// the offending 1-based line number.
std::vector<NBestEntry> read_nbest(const std::filesystem::path& path);
NBestEntry parse_nbest_line(std::string_view line, std::size_t line_number);
void write_nbest(const std::filesystem::path& path, const std::vector<NBestEntry>& entries);

std::vector<TrainPair> read_train_pairs(const std::filesystem::path& path);
void write_train_pairs(const std::filesystem::path& path, const std::vector<TrainPair>& pairs);

/// Resolves a features_path relative to the directory of the list that named it.
std::filesystem::path resolve_relative(const std::filesystem::path& list_file,
                                       const std::string& features_path);

}  // namespace mate::data
