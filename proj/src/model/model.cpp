#include "mate/model/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "mate/data/errors.hpp"

namespace mate::model {

namespace {

using num::Tensor;

Tensor normal(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  Tensor t = Tensor::matrix(rows, cols);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

void add_block(num::ParameterSet& p, const std::string& grp, const std::string& prefix,
               std::size_t width, std::size_t ffn, std::mt19937_64& rng) {
  constexpr double kStd = 0.02;
  p.add(grp, prefix + "/ln1_g", Tensor({1, width}, 1.0));
  p.add(grp, prefix + "/ln1_b", Tensor::matrix(1, width));
  for (const char* m : {"q", "k", "v", "o"}) {
    p.add(grp, prefix + "/w" + m, normal(width, width, kStd, rng));
    p.add(grp, prefix + "/b" + m, Tensor::matrix(1, width));
  }
  p.add(grp, prefix + "/ln2_g", Tensor({1, width}, 1.0));
  p.add(grp, prefix + "/ln2_b", Tensor::matrix(1, width));
  p.add(grp, prefix + "/w1", normal(width, ffn, kStd, rng));
  p.add(grp, prefix + "/b1", Tensor::matrix(1, ffn));
  p.add(grp, prefix + "/w2", normal(ffn, width, kStd, rng));
  p.add(grp, prefix + "/b2", Tensor::matrix(1, width));
}

void require_positive(std::size_t v, const char* name) {
  if (v == 0) throw std::invalid_argument(std::string("model config: ") + name + " must be positive");
}

}  // namespace

void ModelConfig::validate() const {
  require_positive(d_model, "d_model");
  require_positive(encoder_layers, "encoder_layers");
  require_positive(heads, "heads");
  require_positive(ffn_dim, "ffn_dim");
  require_positive(vocab_size, "vocab_size");
  require_positive(feature_dims, "feature_dims");
  require_positive(max_positions, "max_positions");
  require_positive(speech_dim, "speech_dim");
  require_positive(speech_ffn_dim, "speech_ffn_dim");
  if (d_model % heads != 0) throw std::invalid_argument("model config: d_model must be divisible by heads");
  if (speech_dim % heads != 0) {
    throw std::invalid_argument("model config: speech_dim must be divisible by heads");
  }
  if (!(adapter_compression > 0.0 && adapter_compression <= 1.0) || adapter_width() == 0) {
    throw std::invalid_argument("model config: adapter_compression must give a positive width");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("model config: dropout in [0,1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"d_model", c.d_model},
                     {"encoder_layers", c.encoder_layers},
                     {"heads", c.heads},
                     {"ffn_dim", c.ffn_dim},
                     {"vocab_size", c.vocab_size},
                     {"feature_dims", c.feature_dims},
                     {"speech_encoder_layers", c.speech_encoder_layers},
                     {"max_positions", c.max_positions},
                     {"speech_dim", c.speech_dim},
                     {"speech_ffn_dim", c.speech_ffn_dim},
                     {"adapter_compression", c.adapter_compression},
                     {"dropout", c.dropout},
                     {"text_only", c.text_only}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("d_model").get_to(c.d_model);
  j.at("encoder_layers").get_to(c.encoder_layers);
  j.at("heads").get_to(c.heads);
  j.at("ffn_dim").get_to(c.ffn_dim);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("feature_dims").get_to(c.feature_dims);
  j.at("speech_encoder_layers").get_to(c.speech_encoder_layers);
  j.at("max_positions").get_to(c.max_positions);
  j.at("speech_dim").get_to(c.speech_dim);
  j.at("speech_ffn_dim").get_to(c.speech_ffn_dim);
  j.at("adapter_compression").get_to(c.adapter_compression);
  j.at("dropout").get_to(c.dropout);
  c.text_only = j.value("text_only", false);
}

const std::vector<std::string>& all_groups() {
  static const std::vector<std::string> kGroups = {
      group::kTokenEmbeddings, group::kPositionEmbeddings, group::kSegmentEmbeddings,
      group::kSpeechEncoder,   group::kCnnSubsampler,      group::kAdapter,
      group::kMaskedEncoder,   group::kMlmHead};
  return kGroups;
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Model m{config, {}};
  auto& p = m.params;
  const std::size_t d = config.d_model, ds = config.speech_dim, P = config.max_positions;
  constexpr double kStd = 0.02;

  p.add(group::kTokenEmbeddings, "table", normal(config.vocab_size, d, kStd, rng));
  p.add(group::kPositionEmbeddings, "lexical", normal(P, d, kStd, rng));
  p.add(group::kPositionEmbeddings, "acoustic", normal(P, d, kStd, rng));
  p.add(group::kSegmentEmbeddings, "table", normal(2, d, kStd, rng));

  const double in_std = 1.0 / std::sqrt(static_cast<double>(config.feature_dims));
  p.add(group::kSpeechEncoder, "input_w", normal(config.feature_dims, ds, in_std, rng));
  p.add(group::kSpeechEncoder, "input_b", Tensor::matrix(1, ds));
  p.add(group::kSpeechEncoder, "position", normal(P, ds, kStd, rng));
  for (std::size_t l = 0; l < config.speech_encoder_layers; ++l) {
    add_block(p, group::kSpeechEncoder, "layer" + std::to_string(l), ds, config.speech_ffn_dim, rng);
  }
  p.add(group::kSpeechEncoder, "final_ln_g", Tensor({1, ds}, 1.0));
  p.add(group::kSpeechEncoder, "final_ln_b", Tensor::matrix(1, ds));

  std::size_t in_ch = ds;
  for (std::size_t i = 0; i < kSubsampleStrides.size(); ++i) {
    const std::size_t fan_in = kSubsampleKernels[i] * in_ch;
    p.add(group::kCnnSubsampler, "conv" + std::to_string(i) + "_w",
          normal(fan_in, d, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
    p.add(group::kCnnSubsampler, "conv" + std::to_string(i) + "_b", Tensor::matrix(1, d));
    in_ch = d;
  }

  const std::size_t w = config.adapter_width();
  p.add(group::kAdapter, "down_w", normal(d, w, kStd, rng));
  p.add(group::kAdapter, "down_b", Tensor::matrix(1, w));
  p.add(group::kAdapter, "up_w", Tensor::matrix(w, d));
  p.add(group::kAdapter, "up_b", Tensor::matrix(1, d));
  p.add(group::kAdapter, "ln_g", Tensor({1, d}, 1.0));
  p.add(group::kAdapter, "ln_b", Tensor::matrix(1, d));

  for (std::size_t l = 0; l < config.encoder_layers; ++l) {
    add_block(p, group::kMaskedEncoder, "layer" + std::to_string(l), d, config.ffn_dim, rng);
  }
  p.add(group::kMaskedEncoder, "final_ln_g", Tensor({1, d}, 1.0));
  p.add(group::kMaskedEncoder, "final_ln_b", Tensor::matrix(1, d));

  p.add(group::kMlmHead, "w", normal(d, config.vocab_size, kStd, rng));
  p.add(group::kMlmHead, "b", Tensor::matrix(1, config.vocab_size));
  return m;
}

std::vector<int> assemble_lexical(const data::TokenSequence& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.ids.size() + 2);
  ids.push_back(data::Vocab::kCls);
  ids.insert(ids.end(), tokens.ids.begin(), tokens.ids.end());
  ids.push_back(data::Vocab::kSep);
  return ids;
}

std::vector<bool> lexical_valid_mask(std::span<const int> ids) {
  std::vector<bool> valid(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) valid[i] = ids[i] != data::Vocab::kPad;
  return valid;
}

// --- checkpoint -------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'M', 'A', 'T', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void put(std::vector<unsigned char>& out, T v) {
  const auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::little) {
    out.insert(out.end(), bits.begin(), bits.end());
  } else {
    out.insert(out.end(), bits.rbegin(), bits.rend());
  }
}

void put_string(std::vector<unsigned char>& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct Reader {
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;
  std::string path;

  void need(std::size_t n) const {
    if (bytes.size() - pos < n) throw DataError("corrupt checkpoint " + path + " (truncated)");
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    std::array<unsigned char, sizeof(T)> raw{};
    std::memcpy(raw.data(), bytes.data() + pos, sizeof(T));
    if constexpr (std::endian::native != std::endian::little) std::reverse(raw.begin(), raw.end());
    pos += sizeof(T);
    return std::bit_cast<T>(raw);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
    pos += n;
    return s;
  }
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     std::uint64_t vocab_fingerprint) {
  std::vector<unsigned char> out(std::begin(kCkptMagic), std::end(kCkptMagic));
  put<std::uint32_t>(out, kCkptVersion);
  put<std::uint64_t>(out, vocab_fingerprint);
  put_string(out, nlohmann::json(model.config).dump());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.params.size()));
  for (const auto& prm : model.params) {
    put_string(out, prm.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(prm.value.shape().size()));
    for (std::size_t dim : prm.value.shape()) put<std::uint64_t>(out, dim);
    for (double v : prm.value.values()) put<double>(out, v);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
}

Model load_checkpoint(const std::filesystem::path& path, std::uint64_t* vocab_fingerprint) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                         std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof kCkptMagic || std::memcmp(bytes.data(), kCkptMagic, sizeof kCkptMagic) != 0) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  Reader r{bytes, sizeof kCkptMagic, path.string()};
  if (r.get<std::uint32_t>() != kCkptVersion) throw DataError("unsupported checkpoint version");
  const auto fingerprint = r.get<std::uint64_t>();
  if (vocab_fingerprint) *vocab_fingerprint = fingerprint;
  ModelConfig config;
  try {
    config = nlohmann::json::parse(r.get_string()).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt checkpoint config in " + path.string() + ": " + e.what());
  }
  // Rebuild the layout from the config, then overwrite every tensor.
  Model model = init_model(config, 0);
  const auto count = r.get<std::uint32_t>();
  if (count != model.params.size()) {
    throw DataError("checkpoint " + path.string() + " has " + std::to_string(count) +
                    " parameters, config implies " + std::to_string(model.params.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.get_string();
    const auto idx = model.params.find(name);
    if (!idx) throw DataError("checkpoint has unknown parameter " + name);
    const auto rank = r.get<std::uint32_t>();
    std::vector<std::size_t> shape(rank);
    for (auto& dim : shape) dim = static_cast<std::size_t>(r.get<std::uint64_t>());
    num::Tensor& dst = model.params[*idx].value;
    if (shape != dst.shape()) {
      throw DataError("checkpoint parameter " + name + " has shape " + num::shape_string(shape));
    }
    for (double& v : dst.values()) v = r.get<double>();
  }
  if (r.pos != bytes.size()) throw DataError("corrupt checkpoint " + path.string() + " (trailing bytes)");
  return model;
}

}  // namespace mate::model
