#pragma once

#include <cstdint>
#include <functional>

#include "mate/numerics/parameters.hpp"
#include "mate/numerics/tape.hpp"

namespace mate::num {

/// Builds a scalar loss on `tape` from the current parameter values.
using LossFn = std::function<Var(Tape& tape, const ParameterSet& params)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// Parameter sets with fewer scalars than this are checked exhaustively;
  /// larger ones on `sample_size` seeded random coordinates.
  std::size_t exhaustive_limit = 2000;
  std::size_t sample_size = 200;
  std::uint64_t seed = 0;
  /// Denominator floor for the relative error so coordinates whose true
  /// gradient is ~0 are judged on absolute error.
  double floor = 1e-6;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::size_t worst_parameter = 0;
  std::size_t worst_offset = 0;
};

/// Compares backward() against central differences (f(p+eps)-f(p-eps))/(2 eps)
/// on trainable coordinates. Frozen coordinates are checked to carry an
/// exactly-zero analytic gradient. Throws std::domain_error on a non-finite loss.
GradCheckReport grad_check(const LossFn& f, ParameterSet& params,
                           const GradCheckOptions& options = {});

}  // namespace mate::num
