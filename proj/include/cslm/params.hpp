#pragma once

#include <map>
#include <string>
#include <vector>

#include "cslm/errors.hpp"
#include "cslm/mat.hpp"

namespace cslm {

// Named store of trainable tensors, each paired with a gradient accumulator of
// identical shape. Iteration order is the sorted name order, which keeps
// optimizer sweeps deterministic.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    Mat<T> value;
    Mat<T> grad;
  };

  Mat<T>& create(const std::string& name, std::size_t rows, std::size_t cols) {
    if (entries_.count(name)) {
      throw StateError("param '" + name + "' already exists");
    }
    Entry& e = entries_[name];
    e.value = Mat<T>(rows, cols);
    e.grad = Mat<T>(rows, cols);
    return e.value;
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw StateError("unknown param '" + name + "'");
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw StateError("unknown param '" + name + "'");
    return it->second;
  }

  Mat<T>& value(const std::string& name) { return entry(name).value; }
  const Mat<T>& value(const std::string& name) const { return entry(name).value; }
  Mat<T>& grad(const std::string& name) { return entry(name).grad; }
  const Mat<T>& grad(const std::string& name) const { return entry(name).grad; }

  void zero_grads() {
    for (auto& [name, e] : entries_) e.grad.fill(T(0));
  }

  std::size_t size() const { return entries_.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, e] : entries_) out.push_back(name);
    return out;
  }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace cslm
