#pragma once

#include <optional>
#include <span>

#include "mate/model/encoders.hpp"

namespace mate::model {

/// Three conv1d layers (strides 2,1,2; widths 3,1,1) with GELU between them.
/// Output has conv_output_length(R, {2,1,2}) rows and d_model channels.
num::Var subsample(num::Tape& tape, const Model& model, num::Var speech_states);

/// Bottleneck adapter: layer_norm(x + up(gelu(down(x)))), bottleneck width
/// floor(d_model * compression).
num::Var adapt(num::Tape& tape, const Model& model, num::Var cnn_out);

/// Adapter output plus acoustic position (restarting at 0) and the acoustic
/// segment embedding; this is the acoustic embedding fed to the encoder.
num::Var acoustic_embedding(num::Tape& tape, const Model& model, num::Var adapted);

/// speech_encode -> subsample -> adapt -> acoustic_embedding.
num::Var acoustic_path(num::Tape& tape, const Model& model, const data::AudioFeatures& features,
                       const ForwardMode& mode);

/// Acoustic rows first, then lexical rows. With no acoustic part (text-only
/// mode) the result is the lexical embedding with boundary 0.
FusedSequence fuse(std::optional<num::Var> acoustic, num::Var lexical,
                   std::span<const bool> lexical_valid);

}  // namespace mate::model
