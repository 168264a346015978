#include "mate/numerics/tape.hpp"

#include <stdexcept>

namespace mate::num {

const Tensor& Var::value() const { return tape->value(id); }

Var Tape::push(Tensor value, bool requires_grad, Backward backward) {
  if (nodes_.size() >= UINT32_MAX) {
    throw std::length_error("tape is full");
  }
  nodes_.push_back(Node{std::move(value), Tensor{}, std::move(backward), requires_grad});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

Var Tape::variable(Tensor value) { return push(std::move(value), record_, nullptr); }

Var Tape::parameter(const ParameterSet& params, std::size_t index) {
  if (bound_params_ != &params) {
    if (bound_params_ != nullptr) {
      throw std::logic_error("a tape can bind only one parameter set");
    }
    bound_params_ = &params;
    param_nodes_.assign(params.size(), -1);
  }
  if (param_nodes_.size() < params.size()) {
    param_nodes_.resize(params.size(), -1);
  }
  if (param_nodes_[index] >= 0) {
    return Var{this, static_cast<std::uint32_t>(param_nodes_[index])};
  }
  Var v = push(params[index].value, record_ && params.trainable(index), nullptr);
  param_nodes_[index] = v.id;
  return v;
}

Var Tape::parameter(const ParameterSet& params, std::string_view full_name) {
  return parameter(params, params.index(full_name));
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, Backward backward) {
  bool needs = false;
  if (record_) {
    for (const Var& p : parents) {
      needs = needs || nodes_[p.id].requires_grad;
    }
  }
  return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
}

Var Tape::record(Tensor value, const std::vector<Var>& parents, Backward backward) {
  bool needs = false;
  if (record_) {
    for (const Var& p : parents) {
      needs = needs || nodes_[p.id].requires_grad;
    }
  }
  return push(std::move(value), needs, needs ? std::move(backward) : nullptr);
}

Tensor& Tape::grad(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) {
    n.grad = Tensor(n.value.shape(), 0.0);
  }
  return n.grad;
}

Tensor Tape::grad_or_zero(std::uint32_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.empty()) {
    return Tensor(n.value.shape(), 0.0);
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) {
    throw std::invalid_argument("loss belongs to another tape");
  }
  if (nodes_[loss.id].value.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " +
                     shape_string(nodes_[loss.id].value.shape()));
  }
  grad(loss.id).fill(1.0);
  for (std::int64_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backward && !n.grad.empty()) {
      n.backward(*this, static_cast<std::uint32_t>(id));
    }
  }
}

GradientSet Tape::gradients(const ParameterSet& params) const {
  GradientSet out;
  out.names.reserve(params.size());
  out.grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.names.push_back(params[i].name);
    const bool bound = bound_params_ == &params && i < param_nodes_.size() && param_nodes_[i] >= 0;
    if (bound && params.trainable(i)) {
      out.grads.push_back(grad_or_zero(static_cast<std::uint32_t>(param_nodes_[i])));
    } else {
      out.grads.emplace_back(params[i].value.shape(), 0.0);
    }
  }
  return out;
}

GradientSet backward(Var loss, const ParameterSet& params) {
  loss.tape->backward(loss);
  return loss.tape->gradients(params);
}

}  // namespace mate::num
