#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "mate/data/vocab.hpp"

namespace mate::obj {

struct MaskingConfig {
  double mask_rate = 0.15;
  double split_mask = 0.8;
  double split_random = 0.1;
  double split_keep = 0.1;

  /// Throws std::invalid_argument when a rate leaves [0,1] or the split does
  /// not sum to 1.
  void validate() const;
};

/// Corrupted copy of a token sequence (no CLS/SEP). positions index into
/// input_ids; labels[i] is the original id at positions[i].
struct MaskedSample {
  std::vector<int> input_ids;
  std::vector<std::size_t> positions;
  std::vector<int> labels;
};

/// Each position is selected with probability mask_rate; if none is, one is
/// picked uniformly. Selected positions become [MASK], a random
/// non-reserved id, or stay as they are, per the split.
MaskedSample apply_masking(const data::TokenSequence& tokens, std::size_t vocab_size,
                           const MaskingConfig& config, std::mt19937_64& rng);

}  // namespace mate::obj
