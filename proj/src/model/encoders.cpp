#include "mate/model/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "mate/numerics/ops.hpp"
#include "transformer.hpp"

namespace mate::model {

using num::Tape;
using num::Var;

namespace {

Var param(Tape& tape, const Model& model, const std::string& name) {
  return tape.parameter(model.params, name);
}

void check_length(std::size_t n, std::size_t max_positions, const char* what) {
  if (n > max_positions) {
    throw std::length_error(std::string(what) + " of " + std::to_string(n) +
                            " positions exceeds max positions (" + std::to_string(max_positions) + ")");
  }
}

}  // namespace

Var transformer_block(Tape& tape, const Model& model, const std::string& prefix, Var x,
                      std::size_t batch, std::size_t length, std::span<const bool> valid,
                      const ForwardMode& mode) {
  auto P = [&](const char* local) { return param(tape, model, prefix + "/" + local); };
  const std::size_t width = x.cols();
  const std::size_t heads = model.config.heads;
  const std::size_t head_dim = width / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var h = num::layer_norm(x, P("ln1_g"), P("ln1_b"));
  Var q = num::linear(h, P("wq"), P("bq"));
  Var k = num::linear(h, P("wk"), P("bk"));
  Var v = num::linear(h, P("wv"), P("bv"));

  std::vector<Var> per_sequence;
  per_sequence.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    Var qb = batch == 1 ? q : num::slice_rows(q, b * length, (b + 1) * length);
    Var kb = batch == 1 ? k : num::slice_rows(k, b * length, (b + 1) * length);
    Var vb = batch == 1 ? v : num::slice_rows(v, b * length, (b + 1) * length);
    std::vector<Var> head_out;
    head_out.reserve(heads);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::size_t c0 = hd * head_dim, c1 = c0 + head_dim;
      Var qh = heads == 1 ? qb : num::slice_cols(qb, c0, c1);
      Var kh = heads == 1 ? kb : num::slice_cols(kb, c0, c1);
      Var vh = heads == 1 ? vb : num::slice_cols(vb, c0, c1);
      Var probs = num::softmax_rows(num::scale(num::matmul_nt(qh, kh), inv_sqrt), valid);
      head_out.push_back(num::matmul(probs, vh));
    }
    per_sequence.push_back(heads == 1 ? head_out.front() : num::concat_cols(head_out));
  }
  Var attn = batch == 1 ? per_sequence.front() : num::concat_rows(per_sequence);
  attn = num::linear(attn, P("wo"), P("bo"));
  if (mode.training) attn = num::dropout(attn, mode.dropout, *mode.rng);
  x = num::add(x, attn);

  Var h2 = num::layer_norm(x, P("ln2_g"), P("ln2_b"));
  Var ff = num::linear(num::gelu(num::linear(h2, P("w1"), P("b1"))), P("w2"), P("b2"));
  if (mode.training) ff = num::dropout(ff, mode.dropout, *mode.rng);
  return num::add(x, ff);
}

Var embed_tokens(Tape& tape, const Model& model, std::span<const int> ids) {
  check_length(ids.size(), model.config.max_positions, "lexical sequence");
  if (ids.empty()) {
    throw std::invalid_argument("embed_tokens: empty token sequence");
  }
  Var tokens = num::gather_rows(param(tape, model, "token_embeddings/table"), ids);
  Var positions = num::slice_rows(param(tape, model, "position_embeddings/lexical"), 0, ids.size());
  const std::vector<int> text_segment(ids.size(), 0);
  Var segment = num::gather_rows(param(tape, model, "segment_embeddings/table"), text_segment);
  return num::add(num::add(tokens, positions), segment);
}

Var speech_encode(Tape& tape, const Model& model, const data::AudioFeatures& features,
                  const ForwardMode& mode) {
  const auto& cfg = model.config;
  if (features.dims() != cfg.feature_dims) {
    throw std::invalid_argument("speech_encode: features have " + std::to_string(features.dims()) +
                                " dims, model expects " + std::to_string(cfg.feature_dims));
  }
  if (features.frames() == 0) {
    throw std::invalid_argument("speech_encode: empty sequence");
  }
  check_length(features.frames(), cfg.max_positions, "acoustic sequence");
  const std::size_t frames = features.frames();
  Var x = tape.constant(features.values);
  x = num::linear(x, param(tape, model, "speech_encoder/input_w"),
                  param(tape, model, "speech_encoder/input_b"));
  x = num::add(x, num::slice_rows(param(tape, model, "speech_encoder/position"), 0, frames));
  const std::unique_ptr<bool[]> valid(new bool[frames]);
  std::fill_n(valid.get(), frames, true);
  for (std::size_t l = 0; l < cfg.speech_encoder_layers; ++l) {
    x = transformer_block(tape, model, "speech_encoder/layer" + std::to_string(l), x, 1, frames,
                          {valid.get(), frames}, mode);
  }
  return num::layer_norm(x, param(tape, model, "speech_encoder/final_ln_g"),
                         param(tape, model, "speech_encoder/final_ln_b"));
}

ContextualStates encode_fused(Tape& tape, const Model& model, const FusedSequence& fused,
                              const ForwardMode& mode) {
  const std::size_t length = fused.states.rows();
  check_length(length, model.config.max_positions, "fused sequence");
  if (fused.valid.size() != length) {
    throw std::invalid_argument("encode_fused: valid mask length mismatch");
  }
  const std::vector<bool>& valid = fused.valid;
  // std::vector<bool> has no contiguous storage; copy into a bool buffer.
  std::unique_ptr<bool[]> mask(new bool[length]);
  for (std::size_t i = 0; i < length; ++i) mask[i] = valid[i];
  Var x = encode_fused_batch(tape, model, fused.states, 1, length, {mask.get(), length}, mode);
  return ContextualStates{x, fused.boundary};
}

Var encode_fused_batch(Tape& tape, const Model& model, Var stacked, std::size_t batch,
                       std::size_t length, std::span<const bool> valid, const ForwardMode& mode) {
  if (stacked.rows() != batch * length || valid.size() != length) {
    throw std::invalid_argument("encode_fused_batch: layout mismatch");
  }
  Var x = stacked;
  if (mode.training) x = num::dropout(x, mode.dropout, *mode.rng);
  for (std::size_t l = 0; l < model.config.encoder_layers; ++l) {
    x = transformer_block(tape, model, "masked_encoder/layer" + std::to_string(l), x, batch, length,
                          valid, mode);
  }
  return num::layer_norm(x, param(tape, model, "masked_encoder/final_ln_g"),
                         param(tape, model, "masked_encoder/final_ln_b"));
}

Var mlm_logits(Tape& tape, const Model& model, const ContextualStates& states,
               std::span<const std::size_t> positions) {
  std::vector<int> rows;
  rows.reserve(positions.size());
  for (std::size_t p : positions) {
    if (p < states.boundary) {
      throw std::invalid_argument("MLM head is lexical-only (position " + std::to_string(p) +
                                  " < boundary " + std::to_string(states.boundary) + ")");
    }
    if (p >= states.states.rows()) {
      throw std::out_of_range("mlm_logits: position " + std::to_string(p) + " past sequence end");
    }
    rows.push_back(static_cast<int>(p));
  }
  Var picked = num::gather_rows(states.states, rows);
  return num::linear(picked, param(tape, model, "mlm_head/w"), param(tape, model, "mlm_head/b"));
}

}  // namespace mate::model
