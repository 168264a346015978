#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mate/data/features.hpp"
#include "mate/data/nbest.hpp"
#include "mate/data/vocab.hpp"

namespace mate::data {

struct SynthConfig {
  std::size_t content_words = 50;
  std::size_t function_words = 10;
  std::size_t confusable_pairs = 10;
  /// Explicit confusable pairs by word; empty means pair content words
  /// (0,1), (2,3), ... of the generated lexicon.
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t topics = 5;
  std::size_t min_words = 3;
  std::size_t max_words = 8;
  double function_word_rate = 0.3;
  std::size_t frames_per_token = 8;
  std::size_t feature_dims = 16;
  double noise_sigma = 0.1;
  std::size_t train_count = 2000;
  std::size_t dev_count = 200;
  std::size_t test_count = 200;
  std::size_t nbest_depth = 5;
  /// Probability that a competitor edit is a confusable swap rather than an
  /// off-topic substitution.
  double confusable_edit_rate = 0.5;
  /// Probability that a competitor carries a second edit.
  double second_edit_rate = 0.3;
  double error_penalty = 1.0;
  double score_noise_sigma = 0.75;
};

/// Words, topics and acoustic prototypes of one generated language.
struct Lexicon {
  std::vector<std::string> function_words;
  std::vector<std::string> content_words;
  std::vector<std::size_t> topic_of;  // per content word
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // content word indices
  std::vector<int> partner;  // per content word, index of its confusable partner or -1
  /// One prototype row per word: function words first, then content words.
  num::Tensor prototypes;

  std::size_t word_count() const { return function_words.size() + content_words.size(); }
  const std::string& word(std::size_t i) const;
  std::size_t index_of(const std::string& word) const;  // throws std::out_of_range
  std::vector<std::string> all_words() const;
};

/// Throws std::invalid_argument on inconsistent configs, including
/// confusable pairs that name unknown words.
Lexicon make_lexicon(const SynthConfig& config, std::mt19937_64& rng);

/// k frames of the word's prototype plus N(0, sigma) noise per word.
AudioFeatures render_features(const std::vector<std::string>& words, const Lexicon& lexicon,
                              const SynthConfig& config, std::mt19937_64& rng);

/// Nearest-prototype decoding of each k-frame block (for checking that the
/// synthetic audio determines the words).
std::vector<std::string> decode_nearest_prototype(const AudioFeatures& features,
                                                  const Lexicon& lexicon, std::size_t frames_per_token);

struct SynthSummary {
  std::size_t train = 0, dev = 0, test = 0;
  /// Fraction of test entries whose first-pass top hypothesis is the reference.
  double test_top1_correct = 0.0;
};

/// Writes into out_dir:
///   vocab.txt  blocklist.txt  lexicon.json  train.jsonl  dev.nbest.jsonl
///   test.nbest.jsonl  feats/{train,dev,test}/<id>.matf
/// Output is byte-identical for equal (config, seed).
SynthSummary synth_corpus(const SynthConfig& config, std::uint64_t seed,
                          const std::filesystem::path& out_dir);

}  // namespace mate::data
