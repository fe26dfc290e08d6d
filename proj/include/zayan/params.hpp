#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "zayan/tensor.hpp"

namespace zayan::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // same shape as value
};

// Named parameters with a stable iteration order (insertion order).
class ParameterSet {
 public:
  Parameter& add(const std::string& name, Tensor value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    index_[name] = items_.size();
    Parameter p;
    p.name = name;
    p.grad = Tensor(value.dims);
    p.value = std::move(value);
    items_.push_back(std::move(p));
    return items_.back();
  }

  Parameter& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return items_[it->second];
  }
  const Parameter& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return items_[it->second];
  }
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Parameter>& items() { return items_; }
  const std::vector<Parameter>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : items_) p.grad.fill(0.0);
  }

 private:
  std::vector<Parameter> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace zayan::nn
