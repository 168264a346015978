#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "mate/data/features.hpp"
#include "mate/data/vocab.hpp"
#include "mate/model/config.hpp"
#include "mate/numerics/parameters.hpp"
#include "mate/numerics/tape.hpp"

namespace mate::model {

struct Model {
  ModelConfig config;
  num::ParameterSet params;
};

/// Fresh parameters: N(0, 0.02) for embeddings and transformer weights,
/// N(0, 1/fan_in) for the speech input projection and CNN, unit layer-norm
/// gains, zero biases, zero adapter up-projection.
Model init_model(const ModelConfig& config, std::uint64_t seed);

/// Dropout is applied only when training and rate > 0; rng must then be set.
struct ForwardMode {
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  static ForwardMode inference() { return {}; }
};

/// Lexical input as the encoder sees it: [CLS] t_1 ... t_T [SEP].
std::vector<int> assemble_lexical(const data::TokenSequence& tokens);

/// Mask over an assembled lexical sequence: false at [PAD].
std::vector<bool> lexical_valid_mask(std::span<const int> ids);

/// Checkpoint: magic "MATECKPT", u32 version, u64 vocab fingerprint, u32 +
/// config JSON, u32 parameter count, then per parameter: u32 + name, u32
/// rank, u64 dims, float64 LE payload. Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     std::uint64_t vocab_fingerprint);
/// Throws DataError on malformed files.
Model load_checkpoint(const std::filesystem::path& path, std::uint64_t* vocab_fingerprint = nullptr);

}  // namespace mate::model
