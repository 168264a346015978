#pragma once

#include <span>
#include <string>
#include <vector>

#include "mate/numerics/tape.hpp"

namespace mate::obj {

enum class AlignmentKind { Contrastive, Mse, None };

std::string to_string(AlignmentKind kind);
/// Accepts "contrastive", "mse", "none"; throws std::invalid_argument otherwise.
AlignmentKind parse_alignment_kind(const std::string& text);

/// Utterance-level average-pooled vectors, each [1, d].
struct PooledPair {
  num::Var acoustic;
  num::Var lexical;
};

struct LossBreakdown {
  double mlm = 0.0;
  double alignment = 0.0;
  double joint = 0.0;
  AlignmentKind kind = AlignmentKind::Contrastive;
};

/// Mean cross-entropy over rows of logits [n, V]. Throws on n == 0.
num::Var mlm_loss(num::Var logits, std::span<const int> labels);

/// Mean of every acoustic row, mean of the lexical rows where valid.
PooledPair pool_pair(num::Var acoustic, num::Var lexical, std::span<const bool> lexical_valid);

/// -sum_i log softmax_j(a_i . l_j)[i] over in-batch pairs. Throws
/// std::domain_error when a similarity is not finite.
num::Var contrastive_loss(const std::vector<PooledPair>& pairs);

/// mean_i |a_i - l_i|^2 / d.
num::Var mse_alignment_loss(const std::vector<PooledPair>& pairs);

/// joint = mlm + alpha * alignment; alignment is forced to 0 for kind None.
LossBreakdown joint_loss(double mlm, double alignment, double alpha, AlignmentKind kind);

}  // namespace mate::obj
