#include <doctest.h>

#include <array>
#include <cmath>
#include <fstream>
#include <memory>

#include "mate/data/errors.hpp"
#include "mate/model/encoders.hpp"
#include "mate/model/fusion.hpp"
#include "mate/numerics/grad_check.hpp"
#include "mate/numerics/ops.hpp"
#include "test_util.hpp"

using namespace mate;
using namespace mate::model;
using num::Tape;
using num::Tensor;
using num::Var;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 16;
  c.encoder_layers = 2;
  c.heads = 2;
  c.ffn_dim = 24;
  c.vocab_size = 12;
  c.feature_dims = 4;
  c.speech_dim = 8;
  c.speech_ffn_dim = 12;
  c.max_positions = 64;
  c.dropout = 0.0;
  return c;
}

data::AudioFeatures features(std::size_t frames, std::size_t dims, std::mt19937_64& rng) {
  return {test::random_matrix(frames, dims, rng)};
}

// Reference layer norm over each row, unit gain, zero bias.
Tensor plain_layer_norm(const Tensor& x) {
  Tensor y = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) mean += x(r, c) / static_cast<double>(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) var += std::pow(x(r, c) - mean, 2) / static_cast<double>(x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = (x(r, c) - mean) / std::sqrt(var + 1e-5);
  }
  return y;
}

}  // namespace

TEST_CASE("config validation and adapter width") {
  ModelConfig c;
  c.vocab_size = 10;
  CHECK(c.adapter_width() == 32);
  CHECK_NOTHROW(c.validate());
  c.heads = 5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  ModelConfig none;
  CHECK_THROWS_WITH(none.validate(), doctest::Contains("vocab_size"));
}

TEST_CASE("parameter groups are populated") {
  const Model m = init_model(tiny_config(), 1);
  const auto groups = m.params.groups();
  for (const auto& g : all_groups()) {
    CHECK(std::find(groups.begin(), groups.end(), g) != groups.end());
  }
  for (double v : m.params.value("adapter/up_w").values()) CHECK(v == 0.0);
  CHECK(m.params.value("segment_embeddings/table").rows() == 2);
  CHECK(m.params.value("adapter/down_w").cols() == 8);
}

TEST_CASE("lexical assembly and embedding") {
  const Model m = init_model(tiny_config(), 2);
  const std::vector<int> ids = assemble_lexical({{7, 8, 9}});
  CHECK(ids == std::vector<int>{data::Vocab::kCls, 7, 8, 9, data::Vocab::kSep});
  Tape tape(false);
  const Tensor e = embed_tokens(tape, m, ids).value();
  const Tensor& tok = m.params.value("token_embeddings/table");
  const Tensor& pos = m.params.value("position_embeddings/lexical");
  const Tensor& seg = m.params.value("segment_embeddings/table");
  for (std::size_t c = 0; c < 16; ++c) CHECK(e(2, c) == (tok(8, c) + pos(2, c)) + seg(0, c));
  std::vector<int> too_long(65, 5);
  CHECK_THROWS_WITH_AS(embed_tokens(tape, m, too_long), doctest::Contains("exceeds max positions"),
                       std::length_error);
}

TEST_CASE("acoustic length follows the conv chain") {
  const Model m = init_model(tiny_config(), 3);
  std::mt19937_64 rng(3);
  const std::array<std::size_t, 3> strides = {2, 1, 2};
  for (std::size_t r : {1u, 2u, 3u, 7u, 16u, 40u}) {
    Tape tape(false);
    const Var a = acoustic_path(tape, m, features(r, 4, rng), ForwardMode::inference());
    CHECK(a.rows() == num::conv_output_length(r, strides));
    CHECK(a.cols() == 16);
  }
  Tape tape(false);
  CHECK_THROWS_AS(speech_encode(tape, m, features(5, 3, rng), ForwardMode::inference()),
                  std::invalid_argument);
}

TEST_CASE("zero adapter is layer norm of its input") {
  const Model m = init_model(tiny_config(), 4);
  std::mt19937_64 rng(4);
  const Tensor x = test::random_matrix(10, 16, rng);
  Tape tape(false);
  const Tensor y = adapt(tape, m, tape.constant(x)).value();
  const Tensor expected = plain_layer_norm(x);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("fuse stacks acoustic rows first and is lossless") {
  Tape tape(false);
  std::mt19937_64 rng(5);
  const Tensor a = test::random_matrix(10, 16, rng), l = test::random_matrix(5, 16, rng);
  const bool valid[5] = {true, true, true, false, true};
  const FusedSequence f = fuse(tape.constant(a), tape.constant(l), valid);
  CHECK(f.boundary == 10);
  CHECK(f.states.rows() == 15);
  CHECK(f.valid[13] == false);
  CHECK(f.valid[0] == true);
  const Tensor s = f.states.value();
  for (std::size_t c = 0; c < 16; ++c) {
    CHECK(s(10, c) == l(0, c));
    CHECK(s(9, c) == a(9, c));
  }
  const FusedSequence text = fuse(std::nullopt, tape.constant(l), valid);
  CHECK(text.boundary == 0);
  CHECK(text.states.value() == l);
  CHECK_THROWS_AS(fuse(tape.constant(Tensor::matrix(3, 8)), tape.constant(l), valid), std::invalid_argument);
}

TEST_CASE("MLM head refuses acoustic positions") {
  const Model m = init_model(tiny_config(), 6);
  std::mt19937_64 rng(6);
  Tape tape(false);
  const auto ids = assemble_lexical({{5, 6}});
  const auto valid_vec = lexical_valid_mask(ids);
  std::unique_ptr<bool[]> valid(new bool[ids.size()]);
  std::copy(valid_vec.begin(), valid_vec.end(), valid.get());
  const FusedSequence f = fuse(acoustic_path(tape, m, features(16, 4, rng), ForwardMode::inference()),
                               embed_tokens(tape, m, ids), {valid.get(), ids.size()});
  const ContextualStates s = encode_fused(tape, m, f, ForwardMode::inference());
  const std::size_t acoustic_row = 1, lexical_row = f.boundary + 1;
  CHECK_THROWS_WITH_AS(mlm_logits(tape, m, s, {&acoustic_row, 1}), doctest::Contains("lexical-only"),
                       std::invalid_argument);
  CHECK(mlm_logits(tape, m, s, {&lexical_row, 1}).cols() == 12);
}

TEST_CASE("batched encoder equals per-sequence encoder bit for bit") {
  const Model m = init_model(tiny_config(), 7);
  std::mt19937_64 rng(7);
  Tape tape(false);
  std::vector<Var> parts;
  for (int b = 0; b < 3; ++b) parts.push_back(tape.constant(test::random_matrix(9, 16, rng)));
  bool valid[9];
  std::fill_n(valid, 9, true);
  valid[8] = false;
  const Tensor batched =
      encode_fused_batch(tape, m, num::concat_rows(parts), 3, 9, valid, ForwardMode::inference()).value();
  for (std::size_t b = 0; b < 3; ++b) {
    const Tensor single = encode_fused_batch(tape, m, parts[b], 1, 9, valid, ForwardMode::inference()).value();
    for (std::size_t r = 0; r < 9; ++r)
      for (std::size_t c = 0; c < 16; ++c) CHECK(single(r, c) == batched(b * 9 + r, c));
  }
}

TEST_CASE("padding does not leak into valid rows") {
  const Model m = init_model(tiny_config(), 8);
  Tape tape(false);
  std::mt19937_64 rng(8);
  Tensor x = test::random_matrix(6, 16, rng);
  bool valid[6] = {true, true, true, true, false, false};
  const Tensor first = encode_fused_batch(tape, m, tape.constant(x), 1, 6, valid, ForwardMode::inference()).value();
  for (std::size_t c = 0; c < 16; ++c) x(5, c) = 100.0;
  const Tensor second = encode_fused_batch(tape, m, tape.constant(x), 1, 6, valid, ForwardMode::inference()).value();
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 16; ++c) CHECK(first(r, c) == second(r, c));
}

TEST_CASE("gradients through the whole fused model") {
  ModelConfig c = tiny_config();
  c.encoder_layers = 1;
  Model m = init_model(c, 9);
  // Non-zero adapter up-projection so the gradient reaches the bottleneck.
  std::mt19937_64 rng(9);
  m.params.value("adapter/up_w") = test::random_matrix(8, 16, rng, 0.1);
  const data::AudioFeatures f = features(6, 4, rng);
  const auto ids = assemble_lexical({{5, 9, 6}});
  // grad_check perturbs m.params in place, so the graph reads m directly.
  const num::LossFn loss = [&](Tape& tape, const num::ParameterSet&) {
    const bool valid[5] = {true, true, true, true, true};
    const FusedSequence fused = fuse(acoustic_path(tape, m, f, ForwardMode::inference()),
                                     embed_tokens(tape, m, ids), valid);
    const ContextualStates s = encode_fused(tape, m, fused, ForwardMode::inference());
    const std::size_t pos[2] = {fused.boundary + 1, fused.boundary + 3};
    const int labels[2] = {5, 6};
    return num::mean(num::cross_entropy_rows(mlm_logits(tape, m, s, pos), labels));
  };
  num::GradCheckOptions opt;
  opt.sample_size = 300;
  // Truncation error dominates above 1e-4 and cancellation below it.
  opt.eps = 1e-4;
  const num::GradCheckReport r = num::grad_check(loss, m.params, opt);
  INFO("worst ", m.params[r.worst_parameter].name, "[", r.worst_offset, "]");
  CHECK(r.max_relative_error < 1e-5);
}

TEST_CASE("checkpoint round trip is bit exact") {
  test::TempDir dir("ckpt");
  ModelConfig c = tiny_config();
  c.text_only = true;
  const Model m = init_model(c, 10);
  save_checkpoint(dir / "m.ckpt", m, 0xabcdef);
  std::uint64_t fp = 0;
  const Model back = load_checkpoint(dir / "m.ckpt", &fp);
  CHECK(fp == 0xabcdef);
  CHECK(back.config.text_only);
  CHECK(back.config.d_model == 16);
  REQUIRE(back.params.size() == m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    CHECK(back.params[i].name == m.params[i].name);
    CHECK(back.params[i].value == m.params[i].value);
  }
  std::ofstream(dir / "bad.ckpt", std::ios::binary) << "MATECKPT garbage";
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), DataError);
}
