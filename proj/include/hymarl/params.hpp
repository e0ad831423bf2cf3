#pragma once

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>

#include "hymarl/rng.hpp"
#include "hymarl/tensor.hpp"

namespace hymarl {

/// Named parameter tensors with stable, deterministic iteration order
/// (insertion order). References returned by at() stay valid as the store
/// grows.
template <class T>
class ParamStore {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_.emplace(name, static_cast<int>(items_.size()));
    items_.emplace_back(name, std::move(value));
    return items_.back().second;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& at(const std::string& name) { return items_[index_of(name)].second; }
  const Tensor<T>& at(const std::string& name) const { return items_[index_of(name)].second; }

  Tensor<T>& at(int i) { return items_[i].second; }
  const Tensor<T>& at(int i) const { return items_[i].second; }

  const std::string& name(int i) const { return items_[i].first; }
  int size() const { return static_cast<int>(items_.size()); }

  int index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
  }

  /// Hard copy of all values from a structurally identical store.
  void copy_values_from(const ParamStore& other) {
    if (other.size() != size()) throw std::invalid_argument("param store size mismatch");
    for (int i = 0; i < size(); ++i) {
      require_same_shape(items_[i].second, other.items_[i].second, "copy_values_from");
      items_[i].second.data = other.items_[i].second.data;
    }
  }

 private:
  std::deque<std::pair<std::string, Tensor<T>>> items_;
  std::unordered_map<std::string, int> index_;
};

/// Weight init: uniform in +-1/sqrt(fan_in); biases start at zero.
template <class T>
Tensor<T> init_uniform_fanin(int rows, int cols, SplitRng& rng) {
  Tensor<T> w = Tensor<T>::zeros({rows, cols});
  double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
  return w;
}

}  // namespace hymarl
