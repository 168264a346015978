#include "mate/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mate::num {

namespace {

double evaluate(const LossFn& f, const ParameterSet& params) {
  Tape tape(false);
  const double v = f(tape, params).value().item();
  if (!std::isfinite(v)) {
    throw std::domain_error("grad_check: loss is not finite");
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const LossFn& f, ParameterSet& params, const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) {
    throw std::invalid_argument("grad_check: eps must be positive");
  }
  GradientSet analytic;
  {
    Tape tape;
    Var loss = f(tape, params);
    if (!std::isfinite(loss.value().item())) {
      throw std::domain_error("grad_check: loss is not finite");
    }
    analytic = backward(loss, params);
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t trainable_scalars = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!params.trainable(p)) {
      for (double g : analytic.grads[p].values()) {
        if (g != 0.0) {
          throw std::logic_error("grad_check: frozen parameter " + params[p].name +
                                 " received a gradient");
        }
      }
      continue;
    }
    trainable_scalars += params[p].value.size();
    for (std::size_t i = 0; i < params[p].value.size(); ++i) coords.emplace_back(p, i);
  }
  if (trainable_scalars >= options.exhaustive_limit && coords.size() > options.sample_size) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(options.sample_size);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  for (const auto& [p, i] : coords) {
    double& slot = params[p].value[i];
    const double saved = slot;
    slot = saved + options.eps;
    const double up = evaluate(f, params);
    slot = saved - options.eps;
    const double down = evaluate(f, params);
    slot = saved;
    const double numeric = (up - down) / (2.0 * options.eps);
    const double exact = analytic.grads[p][i];
    const double denom = std::max({std::abs(numeric), std::abs(exact), options.floor});
    const double rel = std::abs(numeric - exact) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_parameter = p;
      report.worst_offset = i;
    }
    ++report.coordinates_checked;
  }
  return report;
}

}  // namespace mate::num
