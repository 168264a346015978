#include "mate/objectives/masking.hpp"

#include <cmath>
#include <stdexcept>

namespace mate::obj {

void MaskingConfig::validate() const {
  for (double r : {mask_rate, split_mask, split_random, split_keep}) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("masking: rates must lie in [0,1]");
  }
  if (std::abs(split_mask + split_random + split_keep - 1.0) > 1e-9) {
    throw std::invalid_argument("masking: corruption split must sum to 1");
  }
}

MaskedSample apply_masking(const data::TokenSequence& tokens, std::size_t vocab_size,
                           const MaskingConfig& config, std::mt19937_64& rng) {
  if (tokens.ids.empty()) throw std::invalid_argument("apply_masking: empty token sequence");
  const int first_regular = data::Vocab::kReservedCount;
  if (vocab_size <= static_cast<std::size_t>(first_regular)) {
    throw std::invalid_argument("apply_masking: vocabulary has no regular tokens");
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> random_token(first_regular, static_cast<int>(vocab_size) - 1);

  MaskedSample out;
  out.input_ids = tokens.ids;
  for (std::size_t i = 0; i < tokens.ids.size(); ++i) {
    if (unit(rng) < config.mask_rate) out.positions.push_back(i);
  }
  if (out.positions.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, tokens.ids.size() - 1);
    out.positions.push_back(pick(rng));
  }
  out.labels.reserve(out.positions.size());
  for (std::size_t p : out.positions) {
    out.labels.push_back(tokens.ids[p]);
    const double u = unit(rng);
    if (u < config.split_mask) {
      out.input_ids[p] = data::Vocab::kMask;
    } else if (u < config.split_mask + config.split_random) {
      out.input_ids[p] = random_token(rng);
    }
  }
  return out;
}

}  // namespace mate::obj
