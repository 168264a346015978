#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mate/numerics/tensor.hpp"

namespace mate::num {

struct Parameter {
  std::string group;
  std::string name;  // full name, "group/local"
  Tensor value;
};

/// Named trainable tensors, each belonging to exactly one group. A group's
/// trainable flag decides whether its tensors receive gradients at all.
class ParameterSet {
 public:
  std::size_t add(const std::string& group, const std::string& local_name, Tensor value);

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::optional<std::size_t> find(std::string_view full_name) const;
  /// Throws std::out_of_range for unknown names.
  std::size_t index(std::string_view full_name) const;
  const Tensor& value(std::string_view full_name) const { return params_[index(full_name)].value; }
  Tensor& value(std::string_view full_name) { return params_[index(full_name)].value; }

  void set_group_trainable(const std::string& group, bool trainable);
  bool group_trainable(const std::string& group) const;
  bool trainable(std::size_t index) const { return group_trainable(params_[index].group); }

  std::vector<std::string> groups() const;
  std::size_t scalar_count() const noexcept;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
  std::map<std::string, bool> trainable_;
};

/// d(loss)/d(parameter) for every parameter of a set, in set order. Frozen
/// and unreached parameters carry zeros.
struct GradientSet {
  std::vector<std::string> names;
  std::vector<Tensor> grads;

  const Tensor& operator[](std::string_view name) const;
  std::size_t size() const noexcept { return grads.size(); }
};

}  // namespace mate::num
