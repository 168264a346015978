#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mate/data/features.hpp"
#include "mate/data/vocab.hpp"
#include "mate/model/model.hpp"
#include "mate/objectives/losses.hpp"
#include "mate/objectives/masking.hpp"

namespace mate::obj {

enum class PoolTap { Inputs, Outputs };

struct TrainConfig {
  double alpha = 1.0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  MaskingConfig masking;
  std::size_t steps = 3000;
  double warmup_fraction = 0.1;
  std::uint64_t seed = 0;
  std::vector<std::string> frozen_groups;
  AlignmentKind alignment = AlignmentKind::Contrastive;
  PoolTap pool_tap = PoolTap::Inputs;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  std::size_t warmup_steps() const;
  /// Throws std::invalid_argument naming the bad field.
  void validate() const;
};

/// Base rate scaled by linear warmup over warmup_steps(), then linear decay
/// towards zero at `steps`. step is 1-based.
double learning_rate_at(const TrainConfig& config, std::size_t step);

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what);
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

struct TrainExample {
  std::string utterance_id;
  std::string text;
  data::TokenSequence tokens;
  data::AudioFeatures features;
};

/// Reads a train.jsonl list and the feature files it names.
std::vector<TrainExample> load_examples(const std::filesystem::path& list, const data::Vocab& vocab);

/// Deterministic RNG stream for (seed, step, index, purpose).
std::mt19937_64 derive_rng(std::uint64_t seed, std::uint64_t step, std::uint64_t index,
                           std::uint64_t purpose);

/// Indices of batch_size examples for a step, without repeated transcripts.
/// Throws std::invalid_argument when the corpus has too few distinct texts.
std::vector<std::size_t> select_batch(const std::vector<TrainExample>& examples,
                                      const TrainConfig& config, std::size_t step);

struct BatchLoss {
  num::Var joint;
  LossBreakdown breakdown;
};

/// Full forward pass and joint loss for a batch. Masking and dropout draw
/// from streams derived from (seed, step, position in batch), so the same
/// call always builds the same graph.
BatchLoss batch_loss(num::Tape& tape, const model::Model& model,
                     const std::vector<TrainExample>& examples, std::span<const std::size_t> batch,
                     const TrainConfig& config, std::size_t step);

struct AdamState {
  std::vector<num::Tensor> m;
  std::vector<num::Tensor> v;
  std::size_t updates = 0;
};

struct StepRecord {
  std::size_t step = 0;
  LossBreakdown loss;
  double lr = 0.0;
};

/// One-line JSON: {"step", "mlm", "alignment", "joint", "lr"}.
std::string to_json_line(const StepRecord& record);

/// Owns the optimizer state for one training run over `model`.
class Trainer {
 public:
  Trainer(model::Model& model, const std::vector<TrainExample>& examples, TrainConfig config);

  /// Runs the next step on its scheduled batch.
  StepRecord step();
  /// Runs step number `step` on an explicit batch. Throws DivergenceError
  /// when the loss is not finite.
  StepRecord step_on(std::span<const std::size_t> batch, std::size_t step);

  std::size_t steps_done() const noexcept { return steps_done_; }
  const TrainConfig& config() const noexcept { return config_; }

 private:
  model::Model& model_;
  const std::vector<TrainExample>& examples_;
  TrainConfig config_;
  AdamState adam_;
  std::size_t steps_done_ = 0;
};

/// Runs config.steps steps, calling on_step after each.
void train(model::Model& model, const std::vector<TrainExample>& examples, const TrainConfig& config,
           const std::function<void(const StepRecord&)>& on_step = {});

}  // namespace mate::obj
