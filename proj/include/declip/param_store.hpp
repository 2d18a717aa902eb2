#pragma once

#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "declip/array.hpp"
#include "declip/graph.hpp"

namespace declip::ad {

// Named parameter arrays. Iteration, flattening and gradient extraction all
// follow lexicographic name order, so two stores with identical names, shapes
// and values flatten identically.
class ParamStore {
 public:
  void add(const std::string& name, Array value) {
    if (params_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    params_.emplace(name, std::move(value));
  }

  Array& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParamStore: unknown name " + name);
    return it->second;
  }
  const Array& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("ParamStore: unknown name " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return params_.count(name) != 0; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
  }

  size_t total_size() const {
    size_t n = 0;
    for (const auto& [k, v] : params_) n += v.size();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(total_size());
    for (const auto& [k, v] : params_)
      out.insert(out.end(), v.data().begin(), v.data().end());
    return out;
  }

  void unflatten(std::span<const double> flat) {
    if (flat.size() != total_size())
      throw std::invalid_argument("ParamStore: unflatten size " + std::to_string(flat.size()) +
                                  " != " + std::to_string(total_size()));
    size_t off = 0;
    for (auto& [k, v] : params_) {
      for (size_t i = 0; i < v.size(); ++i) v[i] = flat[off + i];
      off += v.size();
    }
  }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  size_t count() const { return params_.size(); }

 private:
  std::map<std::string, Array> params_;
};

// Leaf nodes for one forward/backward pass over a frozen parameter snapshot.
struct Binding {
  std::map<std::string, Node*> leaves;

  Node* at(const std::string& name) const {
    auto it = leaves.find(name);
    if (it == leaves.end()) throw std::out_of_range("Binding: unknown name " + name);
    return it->second;
  }
};

inline Binding bind(Graph& g, const ParamStore& store) {
  Binding b;
  for (const auto& [name, value] : store) b.leaves.emplace(name, g.input(value));
  return b;
}

// Flattened gradient over `names` in the order given; requires backward to
// have run on the binding's graph. Names absent from the binding are
// zero-filled using shapes from `store`.
inline std::vector<double> grad_vector(const Binding& b, const ParamStore& store,
                                       std::span<const std::string> names) {
  std::vector<double> out;
  for (const auto& name : names) {
    auto it = b.leaves.find(name);
    if (it != b.leaves.end()) {
      const Array& g = it->second->grad;
      out.insert(out.end(), g.data().begin(), g.data().end());
    } else {
      const Array& v = store.get(name);
      out.insert(out.end(), v.size(), 0.0);
    }
  }
  return out;
}

// Full-store gradient in the store's deterministic (lexicographic) order.
inline std::vector<double> grad_vector(const Binding& b, const ParamStore& store) {
  auto names = store.names();
  return grad_vector(b, store, names);
}

}  // namespace declip::ad
