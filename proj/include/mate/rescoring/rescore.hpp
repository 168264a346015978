#pragma once

#include <cstddef>
#include <filesystem>
#include <json.hpp>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "mate/data/nbest.hpp"
#include "mate/data/vocab.hpp"
#include "mate/model/model.hpp"
#include "mate/rescoring/wer.hpp"

namespace mate::eval {

/// (1 - lambda) * first_pass + lambda * pll. Throws std::invalid_argument
/// for lambda outside [0,1].
double interpolate(double first_pass, double pll, double lambda);

struct HypothesisScore {
  std::string text;
  double pll = 0.0;
  double first_pass = 0.0;
  double final_score = 0.0;
  std::size_t tokens = 0;
  int original_rank = 0;
};

struct RescoredEntry {
  std::string utterance_id;
  double lambda = 0.0;
  std::vector<HypothesisScore> ranked;  // best first
};

/// An n-best entry with the PLL of every hypothesis, in input order. Ranking
/// at any lambda needs no further model calls.
struct ScoredEntry {
  data::NBestEntry entry;
  std::vector<double> pll;
  std::vector<std::size_t> tokens;
};

struct ScoreOptions {
  std::size_t workers = 1;
  std::size_t copy_batch = 64;
  /// Record failing utterances in CorpusScores::skipped instead of throwing.
  bool skip_failures = false;
};

struct CorpusScores {
  std::vector<ScoredEntry> entries;  // sorted by utterance_id
  std::vector<std::string> skipped;  // "utterance_id: reason"
};

/// PLL for every hypothesis of one entry. features_root is the n-best file
/// the entry came from; feature paths resolve against it. Throws DataError
/// naming the utterance when its features cannot be read.
ScoredEntry score_entry(const model::Model& model, const data::Vocab& vocab,
                        const data::NBestEntry& entry, const std::filesystem::path& features_root,
                        std::size_t copy_batch = 64);

/// score_entry over a corpus on `workers` threads. Output order does not
/// depend on the worker count.
CorpusScores score_corpus(const model::Model& model, const data::Vocab& vocab,
                          const std::vector<data::NBestEntry>& entries,
                          const std::filesystem::path& features_root, const ScoreOptions& options);

/// Sorts by final score, best first; ties keep first-pass order.
RescoredEntry rank(const ScoredEntry& scored, double lambda);

/// score_entry followed by rank.
RescoredEntry rescore_nbest(const model::Model& model, const data::Vocab& vocab,
                            const data::NBestEntry& entry, const std::filesystem::path& features_root,
                            double lambda, std::size_t copy_batch = 64);

struct UtteranceResult {
  std::string utterance_id;
  std::string reference;
  std::string hypothesis;
  ErrorCounts words;
  ErrorCounts content;
};

struct EvalReport {
  double lambda = 0.0;
  ErrorCounts words;    // pooled over the corpus
  ErrorCounts content;  // pooled, blocklisted words removed
  std::vector<UtteranceResult> utterances;
  std::vector<std::string> skipped;

  double wer() const noexcept { return words.rate(); }
  double cwer() const noexcept { return content.rate(); }
};

/// Top-1 after rescoring at lambda against each reference, pooled counts.
EvalReport evaluate(const CorpusScores& scores, double lambda, const std::set<std::string>& blocklist);

struct SweepResult {
  double best_lambda = 0.0;
  double best_wer = 0.0;
  std::vector<std::pair<double, double>> table;  // (lambda, wer), ascending lambda
};

/// Corpus WER at each distinct lambda of the grid; best is the lowest WER,
/// ties going to the smaller lambda. Throws std::invalid_argument on an empty
/// grid or a lambda outside [0,1].
SweepResult sweep_lambda(const CorpusScores& scores, std::vector<double> grid);

nlohmann::json to_json(const RescoredEntry& entry);
nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const SweepResult& sweep);
void print_table(std::ostream& out, const EvalReport& report);

}  // namespace mate::eval
