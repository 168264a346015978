#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

namespace mate::model {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t encoder_layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t vocab_size = 0;
  std::size_t feature_dims = 16;
  std::size_t speech_encoder_layers = 1;
  std::size_t max_positions = 512;
  /// Width of the stand-in speech encoder (the CNN maps it to d_model).
  std::size_t speech_dim = 32;
  std::size_t speech_ffn_dim = 64;
  double adapter_compression = 0.5;
  double dropout = 0.1;
  /// Lexical-only model: fusion gets no acoustic rows (boundary 0).
  bool text_only = false;

  std::size_t adapter_width() const {
    return static_cast<std::size_t>(static_cast<double>(d_model) * adapter_compression);
  }
  /// Throws std::invalid_argument naming the first bad field.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// The CNN subsampler: three layers, strides (2,1,2), kernel widths (3,1,1).
inline constexpr std::array<std::size_t, 3> kSubsampleStrides = {2, 1, 2};
inline constexpr std::array<std::size_t, 3> kSubsampleKernels = {3, 1, 1};

/// Parameter groups; each can be frozen independently.
namespace group {
inline constexpr const char* kTokenEmbeddings = "token_embeddings";
inline constexpr const char* kPositionEmbeddings = "position_embeddings";
inline constexpr const char* kSegmentEmbeddings = "segment_embeddings";
inline constexpr const char* kSpeechEncoder = "speech_encoder";
inline constexpr const char* kCnnSubsampler = "cnn_subsampler";
inline constexpr const char* kAdapter = "adapter";
inline constexpr const char* kMaskedEncoder = "masked_encoder";
inline constexpr const char* kMlmHead = "mlm_head";
}  // namespace group

const std::vector<std::string>& all_groups();

}  // namespace mate::model
