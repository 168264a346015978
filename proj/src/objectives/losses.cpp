#include "mate/objectives/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "mate/numerics/ops.hpp"

namespace mate::obj {

std::string to_string(AlignmentKind kind) {
  switch (kind) {
    case AlignmentKind::Contrastive: return "contrastive";
    case AlignmentKind::Mse: return "mse";
    case AlignmentKind::None: return "none";
  }
  return "unknown";
}

AlignmentKind parse_alignment_kind(const std::string& text) {
  if (text == "contrastive") return AlignmentKind::Contrastive;
  if (text == "mse") return AlignmentKind::Mse;
  if (text == "none") return AlignmentKind::None;
  throw std::invalid_argument("alignment must be contrastive, mse or none (got '" + text + "')");
}

num::Var mlm_loss(num::Var logits, std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("mlm_loss: no masked positions");
  return num::mean(num::cross_entropy_rows(logits, labels));
}

PooledPair pool_pair(num::Var acoustic, num::Var lexical, std::span<const bool> lexical_valid) {
  if (acoustic.rows() == 0 || lexical.rows() == 0) {
    throw std::invalid_argument("pool_pair: empty side");
  }
  return {num::mean_pool(acoustic, {}), num::mean_pool(lexical, lexical_valid)};
}

namespace {

std::pair<num::Var, num::Var> stack(const std::vector<PooledPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("alignment loss: empty batch");
  std::vector<num::Var> a, l;
  a.reserve(pairs.size());
  l.reserve(pairs.size());
  for (const auto& p : pairs) {
    a.push_back(p.acoustic);
    l.push_back(p.lexical);
  }
  if (pairs.size() == 1) return {a.front(), l.front()};
  return {num::concat_rows(a), num::concat_rows(l)};
}

}  // namespace

num::Var contrastive_loss(const std::vector<PooledPair>& pairs) {
  auto [a, l] = stack(pairs);
  num::Var sim = num::matmul_nt(a, l);
  if (!sim.value().all_finite()) {
    throw std::domain_error("contrastive_loss: non-finite similarity");
  }
  std::vector<std::pair<std::size_t, std::size_t>> diagonal;
  diagonal.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) diagonal.emplace_back(i, i);
  return num::scale(num::sum(num::select(num::log_softmax_rows(sim), diagonal)), -1.0);
}

num::Var mse_alignment_loss(const std::vector<PooledPair>& pairs) {
  auto [a, l] = stack(pairs);
  num::Var diff = num::sub(a, l);
  const double denom = static_cast<double>(pairs.size() * a.cols());
  return num::scale(num::dot(diff, diff), 1.0 / denom);
}

LossBreakdown joint_loss(double mlm, double alignment, double alpha, AlignmentKind kind) {
  LossBreakdown out;
  out.kind = kind;
  out.mlm = mlm;
  out.alignment = kind == AlignmentKind::None ? 0.0 : alignment;
  out.joint = mlm + alpha * out.alignment;
  return out;
}

}  // namespace mate::obj
