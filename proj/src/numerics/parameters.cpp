#include "mate/numerics/parameters.hpp"

#include <stdexcept>

namespace mate::num {

std::size_t ParameterSet::add(const std::string& group, const std::string& local_name,
                              Tensor value) {
  std::string full = group + "/" + local_name;
  if (by_name_.contains(full)) {
    throw std::invalid_argument("duplicate parameter " + full);
  }
  trainable_.try_emplace(group, true);
  by_name_.emplace(full, params_.size());
  params_.push_back(Parameter{group, std::move(full), std::move(value)});
  return params_.size() - 1;
}

std::optional<std::size_t> ParameterSet::find(std::string_view full_name) const {
  if (auto it = by_name_.find(std::string(full_name)); it != by_name_.end()) {
    return it->second;
  }
  return std::nullopt;
}

std::size_t ParameterSet::index(std::string_view full_name) const {
  if (auto i = find(full_name)) {
    return *i;
  }
  throw std::out_of_range("unknown parameter " + std::string(full_name));
}

void ParameterSet::set_group_trainable(const std::string& group, bool trainable) {
  auto it = trainable_.find(group);
  if (it == trainable_.end()) {
    throw std::out_of_range("unknown parameter group " + group);
  }
  it->second = trainable;
}

bool ParameterSet::group_trainable(const std::string& group) const {
  auto it = trainable_.find(group);
  return it != trainable_.end() && it->second;
}

std::vector<std::string> ParameterSet::groups() const {
  std::vector<std::string> out;
  for (const auto& [name, flag] : trainable_) {
    out.push_back(name);
  }
  return out;
}

std::size_t ParameterSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) {
    n += p.value.size();
  }
  return n;
}

const Tensor& GradientSet::operator[](std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) {
      return grads[i];
    }
  }
  throw std::out_of_range("no gradient for " + std::string(name));
}

}  // namespace mate::num
