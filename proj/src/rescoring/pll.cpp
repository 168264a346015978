#include "mate/rescoring/pll.hpp"

#include <algorithm>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mate/model/encoders.hpp"
#include "mate/model/fusion.hpp"
#include "mate/numerics/ops.hpp"

namespace mate::eval {

namespace {

std::vector<int> masked_copy(const data::TokenSequence& tokens, std::size_t k) {
  data::TokenSequence copy = tokens;
  copy.ids[k] = data::Vocab::kMask;
  return model::assemble_lexical(copy);
}

std::optional<num::Var> acoustic(num::Tape& tape, const model::Model& model,
                                 const data::AudioFeatures& features) {
  if (model.config.text_only) return std::nullopt;
  return model::acoustic_path(tape, model, features, model::ForwardMode::inference());
}

}  // namespace

double pll_score(const model::Model& model, const data::AudioFeatures& features,
                 const data::TokenSequence& tokens, std::size_t copy_batch) {
  const std::size_t T = tokens.length();
  if (T == 0) return 0.0;
  copy_batch = std::max<std::size_t>(copy_batch, 1);

  num::Tape tape(false);
  const std::optional<num::Var> a = acoustic(tape, model, features);
  const std::size_t boundary = a ? a->rows() : 0;
  const std::size_t length = boundary + T + 2;
  if (length > model.config.max_positions) {
    throw std::length_error("pll_score: fused sequence of " + std::to_string(length) +
                            " positions exceeds max positions (" +
                            std::to_string(model.config.max_positions) + ")");
  }
  const std::unique_ptr<bool[]> valid(new bool[length]);
  std::fill_n(valid.get(), length, true);
  const std::span<const bool> lexical_valid(valid.get() + boundary, T + 2);

  double total = 0.0;
  for (std::size_t start = 0; start < T; start += copy_batch) {
    const std::size_t count = std::min(copy_batch, T - start);
    std::vector<num::Var> copies;
    std::vector<std::size_t> positions;
    for (std::size_t c = 0; c < count; ++c) {
      const std::size_t k = start + c;
      const std::vector<int> ids = masked_copy(tokens, k);
      copies.push_back(model::fuse(a, model::embed_tokens(tape, model, ids), lexical_valid).states);
      positions.push_back(c * length + boundary + 1 + k);
    }
    num::Var stacked = count == 1 ? copies.front() : num::concat_rows(copies);
    num::Var states = model::encode_fused_batch(tape, model, stacked, count, length,
                                                {valid.get(), length},
                                                model::ForwardMode::inference());
    const num::Tensor& logp =
        num::log_softmax_rows(model::mlm_logits(tape, model, {states, boundary}, positions)).value();
    for (std::size_t c = 0; c < count; ++c) total += logp(c, tokens.ids[start + c]);
  }
  return total;
}

double pll_score_naive(const model::Model& model, const data::AudioFeatures& features,
                       const data::TokenSequence& tokens) {
  double total = 0.0;
  for (std::size_t k = 0; k < tokens.length(); ++k) {
    num::Tape tape(false);
    const std::vector<int> ids = masked_copy(tokens, k);
    const std::vector<bool> valid_vec = model::lexical_valid_mask(ids);
    const std::unique_ptr<bool[]> valid(new bool[ids.size()]);
    std::copy(valid_vec.begin(), valid_vec.end(), valid.get());
    const model::FusedSequence fused =
        model::fuse(acoustic(tape, model, features), model::embed_tokens(tape, model, ids),
                    {valid.get(), ids.size()});
    const model::ContextualStates states =
        model::encode_fused(tape, model, fused, model::ForwardMode::inference());
    const std::size_t position = fused.boundary + 1 + k;
    const num::Tensor& logp =
        num::log_softmax_rows(model::mlm_logits(tape, model, states, {&position, 1})).value();
    total += logp(0, tokens.ids[k]);
  }
  return total;
}

}  // namespace mate::eval
