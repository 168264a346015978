#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "mate/data/synth.hpp"
#include "mate/data/text.hpp"
#include "mate/data/vocab.hpp"
#include "mate/numerics/grad_check.hpp"
#include "mate/numerics/ops.hpp"
#include "mate/objectives/train.hpp"
#include "test_util.hpp"

using namespace mate;
using namespace mate::obj;
using num::Tape;
using num::Tensor;
using num::Var;

namespace {

// Contrastive loss evaluated term by term from an explicit similarity matrix.
double brute_contrastive(const Tensor& a, const Tensor& l) {
  const std::size_t n = a.rows(), d = a.cols();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sims(n);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += a(i, k) * l(j, k);
      sims[j] = s;
    }
    const double mx = *std::max_element(sims.begin(), sims.end());
    double z = 0.0;
    for (double s : sims) z += std::exp(s - mx);
    loss -= (sims[i] - mx) - std::log(z);
  }
  return loss;
}

std::vector<PooledPair> pairs_from(Tape& tape, const Tensor& a, const Tensor& l) {
  std::vector<PooledPair> out;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    out.push_back({num::slice_rows(tape.constant(a), i, i + 1), num::slice_rows(tape.constant(l), i, i + 1)});
  }
  return out;
}

std::vector<TrainExample> synthetic_examples(std::size_t count, std::uint64_t seed, data::Vocab& vocab) {
  data::SynthConfig c;
  std::mt19937_64 rng(seed);
  const data::Lexicon lex = data::make_lexicon(c, rng);
  vocab = data::Vocab::from_tokens([&] {
    std::vector<std::string> t = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
    for (const auto& w : lex.all_words()) t.push_back(w);
    return t;
  }());
  std::vector<TrainExample> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::string> words;
    const std::size_t len = 3 + rng() % 4;
    for (std::size_t k = 0; k < len; ++k) words.push_back(lex.word(rng() % lex.word_count()));
    TrainExample ex;
    ex.utterance_id = "u" + std::to_string(i);
    ex.text = data::join_words(words);
    ex.tokens = data::tokenize(ex.text, vocab);
    ex.features = data::render_features(words, lex, c, rng);
    out.push_back(std::move(ex));
  }
  return out;
}

model::ModelConfig small_model(std::size_t vocab) {
  model::ModelConfig c;
  c.d_model = 32;
  c.encoder_layers = 1;
  c.heads = 2;
  c.ffn_dim = 64;
  c.speech_dim = 16;
  c.speech_ffn_dim = 32;
  c.vocab_size = vocab;
  c.feature_dims = 16;
  return c;
}

}  // namespace

TEST_CASE("masking edge cases") {
  std::mt19937_64 rng(1);
  const data::TokenSequence t{{5, 6, 7, 8}};
  MaskingConfig all{1.0, 1.0, 0.0, 0.0};
  const MaskedSample m = apply_masking(t, 20, all, rng);
  CHECK(m.positions.size() == 4);
  CHECK(m.labels == t.ids);
  for (int id : m.input_ids) CHECK(id == data::Vocab::kMask);

  MaskingConfig none{0.0, 0.8, 0.1, 0.1};
  for (int trial = 0; trial < 20; ++trial) CHECK(apply_masking(t, 20, none, rng).positions.size() == 1);

  MaskingConfig random_only{1.0, 0.0, 1.0, 0.0};
  for (int trial = 0; trial < 50; ++trial) {
    for (int id : apply_masking(t, 9, random_only, rng).input_ids) {
      CHECK(id >= data::Vocab::kReservedCount);
      CHECK(id < 9);
    }
  }
  CHECK_THROWS_AS((MaskingConfig{0.15, 0.5, 0.1, 0.1}.validate()), std::invalid_argument);
}

TEST_CASE("masking rates over many positions") {
  std::mt19937_64 rng(123);
  const MaskingConfig config;
  std::size_t positions = 0, selected = 0, masked = 0, replaced = 0, kept = 0;
  const data::TokenSequence t{std::vector<int>(50, 7)};
  while (positions < 200000) {
    const MaskedSample m = apply_masking(t, 60, config, rng);
    positions += t.length();
    selected += m.positions.size();
    for (std::size_t p : m.positions) {
      if (m.input_ids[p] == data::Vocab::kMask) ++masked;
      else if (m.input_ids[p] == 7) ++kept;
      else ++replaced;
    }
  }
  const double s = static_cast<double>(selected);
  CHECK(s / static_cast<double>(positions) == doctest::Approx(0.15).epsilon(0.01 / 0.15));
  CHECK(static_cast<double>(masked) / s == doctest::Approx(0.8).epsilon(0.02 / 0.8));
  // A random replacement can land on the original token, which reads as kept.
  CHECK(static_cast<double>(replaced + kept) / s == doctest::Approx(0.2).epsilon(0.02 / 0.2));
}

TEST_CASE("mlm loss values") {
  Tape tape;
  const int labels[2] = {1, 4};
  CHECK(mlm_loss(tape.constant(Tensor::matrix(2, 8)), labels).value().item() ==
        doctest::Approx(std::log(8.0)).epsilon(1e-14));
  // Per-row losses 1 and 3 average to 2.
  Tensor logits = Tensor::matrix(2, 2);
  const double target1 = 1.0, target3 = 3.0;
  logits(0, 1) = std::log(std::exp(target1) - 1.0);
  logits(1, 1) = std::log(std::exp(target3) - 1.0);
  const int zeros[2] = {0, 0};
  CHECK(mlm_loss(tape.constant(logits), zeros).value().item() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(mlm_loss(tape.constant(Tensor::matrix(0, 3)), {}), std::invalid_argument);
}

TEST_CASE("pool_pair averages and honours the lexical mask") {
  Tape tape;
  Tensor a = Tensor::matrix(3, 2, 4.0);
  Tensor l = Tensor::matrix(3, 2);
  l(0, 0) = 2.0, l(1, 0) = 4.0, l(2, 0) = 99.0;
  const bool valid[3] = {true, true, false};
  const PooledPair p = pool_pair(tape.constant(a), tape.constant(l), valid);
  CHECK(p.acoustic.value()[0] == 4.0);
  CHECK(p.lexical.value()[0] == 3.0);
  CHECK_THROWS_AS(pool_pair(tape.constant(Tensor::matrix(0, 2)), tape.constant(l), valid),
                  std::invalid_argument);
}

TEST_CASE("contrastive loss against the explicit similarity matrix") {
  std::mt19937_64 rng(42);
  for (std::size_t n : {1u, 2u, 4u, 8u}) {
    for (int trial = 0; trial < 25; ++trial) {
      const Tensor a = test::random_matrix(n, 6, rng), l = test::random_matrix(n, 6, rng);
      Tape tape;
      const double got = contrastive_loss(pairs_from(tape, a, l)).value().item();
      CHECK(std::abs(got - brute_contrastive(a, l)) <= 1e-10);
      CHECK(got >= 0.0);
    }
  }
  Tape tape;
  const Tensor one = test::random_matrix(1, 4, rng);
  CHECK(contrastive_loss(pairs_from(tape, one, test::random_matrix(1, 4, rng))).value().item() == 0.0);
  const Tensor ones = Tensor::matrix(2, 3, 1.0);
  CHECK(contrastive_loss(pairs_from(tape, ones, ones)).value().item() ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));
  // Similarity matrix [[10,0],[0,10]].
  Tensor e = Tensor::matrix(2, 2);
  e(0, 0) = std::sqrt(10.0), e(1, 1) = std::sqrt(10.0);
  CHECK(contrastive_loss(pairs_from(tape, e, e)).value().item() ==
        doctest::Approx(2.0 * std::log1p(std::exp(-10.0))).epsilon(1e-12));
  Tensor inf = Tensor::matrix(2, 2, 1e300);
  CHECK_THROWS_AS(contrastive_loss(pairs_from(tape, inf, inf)), std::domain_error);
}

TEST_CASE("contrastive loss ignores a shared similarity offset") {
  std::mt19937_64 rng(3);
  const Tensor a = test::random_matrix(4, 5, rng), l = test::random_matrix(4, 5, rng);
  // An extra coordinate equal to 1 on every l and c on every a adds c to each similarity.
  Tensor a2 = Tensor::matrix(4, 6), l2 = Tensor::matrix(4, 6);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t k = 0; k < 5; ++k) a2(i, k) = a(i, k), l2(i, k) = l(i, k);
    a2(i, 5) = 2.5;
    l2(i, 5) = 1.0;
  }
  Tape tape;
  CHECK(contrastive_loss(pairs_from(tape, a, l)).value().item() ==
        doctest::Approx(contrastive_loss(pairs_from(tape, a2, l2)).value().item()).epsilon(1e-12));
}

TEST_CASE("contrastive loss gradients reach both towers") {
  std::mt19937_64 rng(17);
  num::ParameterSet params;
  params.add("a", "x", test::random_matrix(4, 5, rng));
  params.add("l", "x", test::random_matrix(4, 5, rng));
  const num::LossFn f = [](Tape& tape, const num::ParameterSet& p) {
    const Var a = tape.parameter(p, "a/x"), l = tape.parameter(p, "l/x");
    std::vector<PooledPair> pairs;
    for (std::size_t i = 0; i < 4; ++i) pairs.push_back({num::slice_rows(a, i, i + 1), num::slice_rows(l, i, i + 1)});
    return num::add(contrastive_loss(pairs), mse_alignment_loss(pairs));
  };
  CHECK(num::grad_check(f, params).max_relative_error <= 1e-6);
}

TEST_CASE("mse alignment values") {
  Tape tape;
  Tensor a = Tensor::matrix(1, 2), l = Tensor::matrix(1, 2);
  a(0, 0) = 1.0;
  CHECK(mse_alignment_loss(pairs_from(tape, a, l)).value().item() == 0.5);
  CHECK(mse_alignment_loss(pairs_from(tape, a, a)).value().item() == 0.0);
  std::mt19937_64 rng(1);
  const Tensor x = test::random_matrix(3, 4, rng), y = test::random_matrix(3, 4, rng);
  Tensor x2 = x, y2 = y;
  for (double& v : x2.values()) v *= 2.0;
  for (double& v : y2.values()) v *= 2.0;
  CHECK(mse_alignment_loss(pairs_from(tape, x2, y2)).value().item() ==
        doctest::Approx(4.0 * mse_alignment_loss(pairs_from(tape, x, y)).value().item()).epsilon(1e-14));
}

TEST_CASE("joint loss") {
  CHECK(joint_loss(2.0, 0.5, 1.0, AlignmentKind::Contrastive).joint == 2.5);
  CHECK(joint_loss(2.0, 0.5, 0.0, AlignmentKind::Contrastive).joint == 2.0);
  CHECK(joint_loss(1.0, 1.0, 3.0, AlignmentKind::Mse).joint == 4.0);
  const LossBreakdown na = joint_loss(1.5, 7.0, 1.0, AlignmentKind::None);
  CHECK(na.alignment == 0.0);
  CHECK(na.joint == 1.5);
  CHECK(parse_alignment_kind("mse") == AlignmentKind::Mse);
  CHECK_THROWS_AS(parse_alignment_kind("cosine"), std::invalid_argument);
}

TEST_CASE("learning rate warms up then decays linearly") {
  TrainConfig c;
  c.learning_rate = 1.0;
  c.steps = 100;
  c.warmup_fraction = 0.1;
  CHECK(c.warmup_steps() == 10);
  CHECK(learning_rate_at(c, 1) == doctest::Approx(0.1));
  CHECK(learning_rate_at(c, 10) == 1.0);
  CHECK(learning_rate_at(c, 11) < 1.0);
  CHECK(learning_rate_at(c, 100) == doctest::Approx(1.0 / 91.0));
  CHECK(learning_rate_at(c, 55) > learning_rate_at(c, 56));
  CHECK(learning_rate_at(c, 56) - learning_rate_at(c, 57) ==
        doctest::Approx(learning_rate_at(c, 80) - learning_rate_at(c, 81)));
}

TEST_CASE("batches never repeat a transcript") {
  data::Vocab vocab;
  std::vector<TrainExample> ex = synthetic_examples(40, 2, vocab);
  ex[1].text = ex[0].text;
  TrainConfig c;
  c.batch_size = 39;
  for (std::size_t step = 1; step < 20; ++step) {
    const auto batch = select_batch(ex, c, step);
    std::set<std::string> texts;
    for (std::size_t i : batch) texts.insert(ex[i].text);
    CHECK(texts.size() == batch.size());
    CHECK(batch == select_batch(ex, c, step));
  }
  c.batch_size = 40;
  CHECK_THROWS_AS(select_batch(ex, c, 1), std::invalid_argument);
}

TEST_CASE("train step: zero learning rate, freezing, determinism") {
  data::Vocab vocab;
  const auto ex = synthetic_examples(16, 3, vocab);
  TrainConfig c;
  c.batch_size = 4;
  c.steps = 5;
  c.seed = 9;

  SUBCASE("lr 0 leaves parameters unchanged") {
    model::Model m = model::init_model(small_model(vocab.size()), 1);
    const model::Model before = m;
    c.learning_rate = 0.0;
    Trainer t(m, ex, c);
    t.step();
    for (std::size_t i = 0; i < m.params.size(); ++i) CHECK(m.params[i].value == before.params[i].value);
  }
  SUBCASE("frozen group is bit identical, others move") {
    model::Model m = model::init_model(small_model(vocab.size()), 1);
    const model::Model before = m;
    c.frozen_groups = {"masked_encoder"};
    Trainer t(m, ex, c);
    for (int s = 0; s < 3; ++s) t.step();
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      if (m.params[i].group == "masked_encoder") CHECK(m.params[i].value == before.params[i].value);
    }
    CHECK_FALSE(m.params.value("mlm_head/w") == before.params.value("mlm_head/w"));
  }
  SUBCASE("same seed, same losses") {
    model::Model m1 = model::init_model(small_model(vocab.size()), 1), m2 = m1;
    Trainer t1(m1, ex, c), t2(m2, ex, c);
    for (int s = 0; s < 3; ++s) {
      const StepRecord a = t1.step(), b = t2.step();
      CHECK(a.loss.joint == b.loss.joint);
      CHECK(to_json_line(a) == to_json_line(b));
    }
  }
  SUBCASE("text-only models skip the alignment term") {
    model::ModelConfig mc = small_model(vocab.size());
    mc.text_only = true;
    model::Model m = model::init_model(mc, 1);
    Trainer t(m, ex, c);
    const StepRecord r = t.step();
    CHECK(r.loss.kind == AlignmentKind::None);
    CHECK(r.loss.joint == r.loss.mlm);
  }
}

TEST_CASE("a non-finite loss is reported as divergence with its step") {
  data::Vocab vocab;
  const auto ex = synthetic_examples(8, 4, vocab);
  model::Model m = model::init_model(small_model(vocab.size()), 1);
  for (double& v : m.params.value("mlm_head/b").values()) v = std::numeric_limits<double>::infinity();
  TrainConfig c;
  c.batch_size = 2;
  Trainer t(m, ex, c);
  try {
    t.step();
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.step() == 1);
    CHECK(std::string(e.what()).find("divergence") != std::string::npos);
  }
}

TEST_CASE("overfitting a small set drives the MLM loss down") {
  data::Vocab vocab;
  const auto ex = synthetic_examples(32, 5, vocab);
  model::ModelConfig mc = small_model(vocab.size());
  mc.dropout = 0.0;
  model::Model m = model::init_model(mc, 2);
  TrainConfig c;
  c.batch_size = 32;
  c.steps = 200;
  c.learning_rate = 1e-2;
  c.seed = 1;
  // MLM only: the summed in-batch alignment term would otherwise dominate
  // the gradient over so few steps.
  c.alignment = AlignmentKind::None;
  std::vector<double> mlm;
  train(m, ex, c, [&](const StepRecord& r) { mlm.push_back(r.loss.mlm); });
  REQUIRE(mlm.size() == 200);
  // Mean of the last ten steps smooths the per-step mask draw.
  double tail = 0.0;
  for (std::size_t i = 190; i < 200; ++i) tail += mlm[i] / 10.0;
  MESSAGE("mlm step 1 = ", mlm.front(), ", last-10 mean = ", tail);
  CHECK(tail <= 0.2 * mlm.front());
}
