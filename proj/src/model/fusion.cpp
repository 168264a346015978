#include "mate/model/fusion.hpp"

#include <stdexcept>
#include <string>

#include "mate/numerics/ops.hpp"

namespace mate::model {

using num::Tape;
using num::Var;

namespace {

Var param(Tape& tape, const Model& model, const std::string& name) {
  return tape.parameter(model.params, name);
}

}  // namespace

Var subsample(Tape& tape, const Model& model, Var speech_states) {
  Var x = speech_states;
  for (std::size_t i = 0; i < kSubsampleStrides.size(); ++i) {
    if (i > 0) x = num::gelu(x);
    const std::string id = std::to_string(i);
    x = num::conv1d(x, param(tape, model, "cnn_subsampler/conv" + id + "_w"),
                    param(tape, model, "cnn_subsampler/conv" + id + "_b"), kSubsampleKernels[i],
                    kSubsampleStrides[i]);
  }
  return x;
}

Var adapt(Tape& tape, const Model& model, Var cnn_out) {
  Var h = num::gelu(num::linear(cnn_out, param(tape, model, "adapter/down_w"),
                                param(tape, model, "adapter/down_b")));
  Var up = num::linear(h, param(tape, model, "adapter/up_w"), param(tape, model, "adapter/up_b"));
  return num::layer_norm(num::add(cnn_out, up), param(tape, model, "adapter/ln_g"),
                         param(tape, model, "adapter/ln_b"));
}

Var acoustic_embedding(Tape& tape, const Model& model, Var adapted) {
  const std::size_t rows = adapted.rows();
  if (rows > model.config.max_positions) {
    throw std::length_error("acoustic embedding of " + std::to_string(rows) +
                            " rows exceeds max positions");
  }
  Var pos = num::slice_rows(param(tape, model, "position_embeddings/acoustic"), 0, rows);
  const std::vector<int> audio_segment(rows, 1);
  Var seg = num::gather_rows(param(tape, model, "segment_embeddings/table"), audio_segment);
  return num::add(num::add(adapted, pos), seg);
}

Var acoustic_path(Tape& tape, const Model& model, const data::AudioFeatures& features,
                  const ForwardMode& mode) {
  Var speech = speech_encode(tape, model, features, mode);
  return acoustic_embedding(tape, model, adapt(tape, model, subsample(tape, model, speech)));
}

FusedSequence fuse(std::optional<Var> acoustic, Var lexical, std::span<const bool> lexical_valid) {
  if (lexical.rows() == 0) throw std::invalid_argument("fuse: empty lexical embedding");
  if (lexical_valid.size() != lexical.rows()) {
    throw std::invalid_argument("fuse: lexical valid mask length mismatch");
  }
  FusedSequence out;
  if (!acoustic) {
    out.states = lexical;
    out.boundary = 0;
    out.valid.assign(lexical_valid.begin(), lexical_valid.end());
    return out;
  }
  if (acoustic->rows() == 0) throw std::invalid_argument("fuse: empty acoustic embedding");
  if (acoustic->cols() != lexical.cols()) {
    throw std::invalid_argument("fuse: d_model mismatch (" + std::to_string(acoustic->cols()) +
                                " vs " + std::to_string(lexical.cols()) + ")");
  }
  out.states = num::concat_rows({*acoustic, lexical});
  out.boundary = acoustic->rows();
  out.valid.assign(out.boundary, true);
  out.valid.insert(out.valid.end(), lexical_valid.begin(), lexical_valid.end());
  return out;
}

}  // namespace mate::model
