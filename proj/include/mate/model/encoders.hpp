#pragma once

#include <span>
#include <vector>

#include "mate/data/features.hpp"
#include "mate/model/model.hpp"
#include "mate/numerics/tape.hpp"

namespace mate::model {

/// Acoustic rows [0, boundary) followed by lexical rows; valid is false only
/// at lexical [PAD] positions.
struct FusedSequence {
  num::Var states;
  std::size_t boundary = 0;
  std::vector<bool> valid;
};

struct ContextualStates {
  num::Var states;
  std::size_t boundary = 0;
};

/// Row i = token[id_i] + lexical_position[i] + segment[text].
/// Throws std::length_error("... exceeds max positions") for long inputs.
num::Var embed_tokens(num::Tape& tape, const Model& model, std::span<const int> ids);

/// Linear projection to speech_dim, learned positions, then
/// speech_encoder_layers pre-norm transformer layers. Keeps every frame.
num::Var speech_encode(num::Tape& tape, const Model& model, const data::AudioFeatures& features,
                       const ForwardMode& mode);

/// Pre-norm transformer over the whole fused sequence with full bidirectional
/// attention; invalid positions are masked out as keys.
ContextualStates encode_fused(num::Tape& tape, const Model& model, const FusedSequence& fused,
                              const ForwardMode& mode);

/// Same encoder over `batch` sequences of equal `length` stacked along rows.
/// Every sequence shares `valid`. Row-for-row identical to encode_fused run
/// on each sequence alone.
num::Var encode_fused_batch(num::Tape& tape, const Model& model, num::Var stacked,
                            std::size_t batch, std::size_t length, std::span<const bool> valid,
                            const ForwardMode& mode);

/// Linear head d_model -> V at the requested absolute fused positions.
/// Throws std::invalid_argument("MLM head is lexical-only") for acoustic rows.
num::Var mlm_logits(num::Tape& tape, const Model& model, const ContextualStates& states,
                    std::span<const std::size_t> positions);

}  // namespace mate::model
