#include "mate/objectives/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <unordered_set>

#include "mate/data/errors.hpp"
#include "mate/data/nbest.hpp"
#include "mate/model/encoders.hpp"
#include "mate/model/fusion.hpp"
#include "mate/numerics/ops.hpp"

namespace mate::obj {

namespace {

constexpr std::uint64_t kPurposeBatch = 1;
constexpr std::uint64_t kPurposeSample = 2;

void require(bool ok, const char* message) {
  if (!ok) throw std::invalid_argument(std::string("train config: ") + message);
}

}  // namespace

std::size_t TrainConfig::warmup_steps() const {
  return static_cast<std::size_t>(std::ceil(warmup_fraction * static_cast<double>(steps)));
}

void TrainConfig::validate() const {
  require(std::isfinite(alpha) && alpha >= 0.0, "alpha must be a non-negative number");
  require(std::isfinite(learning_rate) && learning_rate >= 0.0, "learning rate must be non-negative");
  require(batch_size >= 1, "batch size must be at least 1");
  require(warmup_fraction >= 0.0 && warmup_fraction <= 1.0, "warmup fraction must lie in [0,1]");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
          "adam betas must lie in [0,1)");
  require(adam_eps > 0.0, "adam epsilon must be positive");
  masking.validate();
}

double learning_rate_at(const TrainConfig& config, std::size_t step) {
  const std::size_t warmup = config.warmup_steps();
  const double base = config.learning_rate;
  if (step == 0) return 0.0;
  if (step <= warmup) return base * static_cast<double>(step) / static_cast<double>(warmup);
  if (step > config.steps) return 0.0;
  const double remaining = static_cast<double>(config.steps - step + 1);
  return base * remaining / static_cast<double>(config.steps - warmup + 1);
}

DivergenceError::DivergenceError(std::size_t step, const std::string& what)
    : std::runtime_error("divergence at step " + std::to_string(step) + ": " + what), step_(step) {}

std::vector<TrainExample> load_examples(const std::filesystem::path& list, const data::Vocab& vocab) {
  std::vector<TrainExample> out;
  for (const auto& pair : data::read_train_pairs(list)) {
    TrainExample ex;
    ex.utterance_id = pair.utterance_id;
    ex.text = pair.text;
    ex.tokens = data::tokenize(pair.text, vocab);
    if (ex.tokens.ids.empty()) {
      throw DataError(list.string() + ": utterance " + pair.utterance_id + " has an empty transcript");
    }
    try {
      ex.features = data::read_features(data::resolve_relative(list, pair.features_path));
    } catch (const DataError& e) {
      throw DataError("utterance " + pair.utterance_id + ": " + e.what());
    }
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw DataError(list.string() + ": no training pairs");
  return out;
}

std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t step, std::uint64_t index,
                           std::uint64_t purpose) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(step), hi(step), lo(index), hi(index), lo(purpose)};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> select_batch(const std::vector<TrainExample>& examples,
                                      const TrainConfig& config, std::size_t step) {
  if (examples.empty()) throw std::invalid_argument("select_batch: no examples");
  auto rng = derive_rng(config.seed, step, 0, kPurposeBatch);
  std::uniform_int_distribution<std::size_t> pick(0, examples.size() - 1);
  std::vector<std::size_t> batch;
  std::unordered_set<std::string> texts;
  const std::size_t max_draws = 100 * config.batch_size + 1000;
  for (std::size_t draw = 0; batch.size() < config.batch_size; ++draw) {
    if (draw >= max_draws) {
      throw std::invalid_argument("select_batch: not enough distinct transcripts for batch size " +
                                  std::to_string(config.batch_size));
    }
    const std::size_t i = pick(rng);
    if (texts.insert(examples[i].text).second) batch.push_back(i);
  }
  return batch;
}

BatchLoss batch_loss(num::Tape& tape, const model::Model& model,
                     const std::vector<TrainExample>& examples, std::span<const std::size_t> batch,
                     const TrainConfig& config, std::size_t step) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  const bool text_only = model.config.text_only;
  const AlignmentKind kind = text_only ? AlignmentKind::None : config.alignment;

  std::vector<num::Var> logits;
  std::vector<int> labels;
  std::vector<PooledPair> pooled;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainExample& ex = examples.at(batch[b]);
    auto rng = derive_rng(config.seed, step, b, kPurposeSample);
    const MaskedSample masked = apply_masking(ex.tokens, model.config.vocab_size, config.masking, rng);
    const std::vector<int> ids = model::assemble_lexical({masked.input_ids});
    const std::vector<bool> valid_vec = model::lexical_valid_mask(ids);
    const std::unique_ptr<bool[]> valid(new bool[ids.size()]);
    std::copy(valid_vec.begin(), valid_vec.end(), valid.get());
    const std::span<const bool> valid_span(valid.get(), ids.size());

    const model::ForwardMode mode{true, model.config.dropout, &rng};
    num::Var lexical = model::embed_tokens(tape, model, ids);
    std::optional<num::Var> acoustic;
    if (!text_only) acoustic = model::acoustic_path(tape, model, ex.features, mode);
    const model::FusedSequence fused = model::fuse(acoustic, lexical, valid_span);
    const model::ContextualStates states = model::encode_fused(tape, model, fused, mode);

    std::vector<std::size_t> positions;
    positions.reserve(masked.positions.size());
    for (std::size_t p : masked.positions) positions.push_back(fused.boundary + 1 + p);
    logits.push_back(model::mlm_logits(tape, model, states, positions));
    labels.insert(labels.end(), masked.labels.begin(), masked.labels.end());

    if (kind != AlignmentKind::None) {
      if (config.pool_tap == PoolTap::Inputs) {
        pooled.push_back(pool_pair(*acoustic, lexical, valid_span));
      } else {
        const std::size_t rows = states.states.rows();
        pooled.push_back(pool_pair(num::slice_rows(states.states, 0, fused.boundary),
                                   num::slice_rows(states.states, fused.boundary, rows),
                                   valid_span));
      }
    }
  }

  num::Var all_logits = logits.size() == 1 ? logits.front() : num::concat_rows(logits);
  num::Var mlm = mlm_loss(all_logits, labels);
  num::Var joint = mlm;
  double alignment_value = 0.0;
  if (kind != AlignmentKind::None) {
    num::Var alignment =
        kind == AlignmentKind::Contrastive ? contrastive_loss(pooled) : mse_alignment_loss(pooled);
    alignment_value = alignment.value().item();
    joint = num::add(mlm, num::scale(alignment, config.alpha));
  }
  BatchLoss out{joint, joint_loss(mlm.value().item(), alignment_value, config.alpha, kind)};
  out.breakdown.joint = joint.value().item();
  return out;
}

std::string to_json_line(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                R"({"step": %zu, "mlm": %.17g, "alignment": %.17g, "joint": %.17g, "lr": %.17g})",
                r.step, r.loss.mlm, r.loss.alignment, r.loss.joint, r.lr);
  return buf;
}

Trainer::Trainer(model::Model& model, const std::vector<TrainExample>& examples, TrainConfig config)
    : model_(model), examples_(examples), config_(std::move(config)) {
  config_.validate();
  for (const auto& g : model_.params.groups()) model_.params.set_group_trainable(g, true);
  for (const auto& g : config_.frozen_groups) model_.params.set_group_trainable(g, false);
  adam_.m.reserve(model_.params.size());
  adam_.v.reserve(model_.params.size());
  for (const auto& p : model_.params) {
    adam_.m.emplace_back(p.value.shape(), 0.0);
    adam_.v.emplace_back(p.value.shape(), 0.0);
  }
}

StepRecord Trainer::step() {
  const std::size_t next = steps_done_ + 1;
  const auto batch = select_batch(examples_, config_, next);
  return step_on(batch, next);
}

StepRecord Trainer::step_on(std::span<const std::size_t> batch, std::size_t step) {
  num::Tape tape;
  BatchLoss loss;
  try {
    loss = batch_loss(tape, model_, examples_, batch, config_, step);
  } catch (const std::domain_error& e) {
    throw DivergenceError(step, e.what());
  }
  if (!std::isfinite(loss.breakdown.joint)) {
    throw DivergenceError(step, "non-finite joint loss");
  }
  const num::GradientSet grads = num::backward(loss.joint, model_.params);

  const double lr = learning_rate_at(config_, step);
  ++adam_.updates;
  const double t = static_cast<double>(adam_.updates);
  const double b1 = config_.adam_beta1, b2 = config_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
  for (std::size_t i = 0; i < model_.params.size(); ++i) {
    if (!model_.params.trainable(i)) continue;
    auto w = model_.params[i].value.values();
    const auto g = grads.grads[i].values();
    auto m = adam_.m[i].values();
    auto v = adam_.v[i].values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.adam_eps);
    }
  }
  steps_done_ = std::max(steps_done_, step);
  return {step, loss.breakdown, lr};
}

void train(model::Model& model, const std::vector<TrainExample>& examples, const TrainConfig& config,
           const std::function<void(const StepRecord&)>& on_step) {
  Trainer trainer(model, examples, config);
  for (std::size_t s = 0; s < config.steps; ++s) {
    const StepRecord r = trainer.step();
    if (on_step) on_step(r);
  }
}

}  // namespace mate::obj
