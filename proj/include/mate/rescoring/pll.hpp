#pragma once

#include <cstddef>

#include "mate/data/features.hpp"
#include "mate/data/vocab.hpp"
#include "mate/model/model.hpp"

namespace mate::eval {

/// Sum over k of log P(t_k | audio, tokens with t_k replaced by [MASK]).
/// The T masked copies share one acoustic pass and run through the encoder
/// `copy_batch` at a time. Text-only models ignore `features`.
/// Throws std::length_error when the fused sequence exceeds max positions.
double pll_score(const model::Model& model, const data::AudioFeatures& features,
                 const data::TokenSequence& tokens, std::size_t copy_batch = 64);

/// Reference implementation: one fresh forward pass per masked position.
double pll_score_naive(const model::Model& model, const data::AudioFeatures& features,
                       const data::TokenSequence& tokens);

}  // namespace mate::eval
