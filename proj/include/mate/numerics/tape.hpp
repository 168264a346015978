#pragma once

#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "mate/numerics/parameters.hpp"
#include "mate/numerics/tensor.hpp"

namespace mate::num {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Dynamically recorded computation graph for reverse-mode differentiation.
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid topological order for the backward sweep. A tape is built per
/// forward pass and thrown away afterwards.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  /// With record_gradients=false nothing requires a gradient and no backward
  /// closures are kept (inference).
  explicit Tape(bool record_gradients = true) : record_(record_gradients) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf that requires a gradient (when recording).
  Var variable(Tensor value);
  /// Leaf bound to params[index]; created once per tape. Frozen parameters
  /// become constants.
  Var parameter(const ParameterSet& params, std::size_t index);
  Var parameter(const ParameterSet& params, std::string_view full_name);

  /// Appends an op result. `backward` runs only if some parent requires a gradient.
  Var record(Tensor value, std::initializer_list<Var> parents, Backward backward);
  Var record(Tensor value, const std::vector<Var>& parents, Backward backward);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  bool recording() const noexcept { return record_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Accumulated gradient, allocated (zeros) on first use.
  Tensor& grad(std::uint32_t id);
  /// Gradient of a node after backward(); zeros if nothing flowed into it.
  Tensor grad_or_zero(std::uint32_t id) const;

  /// Seeds d(loss)/d(loss)=1 and runs the reverse sweep. loss must hold one value.
  void backward(Var loss);

  /// Gradients for every parameter of `params` after backward().
  GradientSet gradients(const ParameterSet& params) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
  };

  Var push(Tensor value, bool requires_grad, Backward backward);

  std::vector<Node> nodes_;
  bool record_;
  const ParameterSet* bound_params_ = nullptr;
  std::vector<std::int64_t> param_nodes_;
};

/// Convenience: backward() then gradients().
GradientSet backward(Var loss, const ParameterSet& params);

}  // namespace mate::num
