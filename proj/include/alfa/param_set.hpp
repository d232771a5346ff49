#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "alfa/autodiff.hpp"

namespace alfa {

/// Ordered, uniquely named tensors. Order is part of the contract: it fixes
/// the layer-unit numbering and the layout of every serialized form.
template <std::floating_point T>
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };

  ParamSet() = default;

  void add(std::string name, Tensor<T> tensor) {
    if (find(name)) throw Error("param set: duplicate name '" + name + "'");
    entries_.push_back({std::move(name), std::move(tensor)});
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  const std::string& name(std::size_t i) const { return entries_.at(i).name; }
  const Tensor<T>& operator[](std::size_t i) const { return entries_[i].tensor; }
  Tensor<T>& operator[](std::size_t i) { return entries_[i].tensor; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return i;
    return std::nullopt;
  }

  const Tensor<T>& at(std::string_view name) const {
    auto i = find(name);
    if (!i) throw Error("param set: no entry '" + std::string(name) + "'");
    return entries_[*i].tensor;
  }
  Tensor<T>& at(std::string_view name) {
    auto i = find(name);
    if (!i) throw Error("param set: no entry '" + std::string(name) + "'");
    return entries_[*i].tensor;
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.tensor);
    return out;
  }

  /// Same names, new tensors (shapes must match).
  ParamSet with_tensors(std::vector<Tensor<T>> tensors) const {
    if (tensors.size() != entries_.size()) {
      throw ShapeError("param set: " + std::to_string(tensors.size()) + " tensors for " +
                       std::to_string(entries_.size()) + " entries");
    }
    ParamSet out;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (tensors[i].shape() != entries_[i].tensor.shape()) {
        throw ShapeError("param set: '" + entries_[i].name + "' expects " +
                         shape_string(entries_[i].tensor.shape()) + ", got " +
                         shape_string(tensors[i].shape()));
      }
      out.entries_.push_back({entries_[i].name, std::move(tensors[i])});
    }
    return out;
  }

  /// Registers every entry as a leaf of `graph`.
  ParamSet attach(Graph<T>& graph) const {
    ParamSet out;
    for (const auto& e : entries_) out.entries_.push_back({e.name, graph.variable(e.tensor)});
    return out;
  }

  ParamSet detach() const {
    ParamSet out;
    for (const auto& e : entries_) out.entries_.push_back({e.name, e.tensor.detach()});
    return out;
  }

  /// Total number of scalar values.
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  /// Appends all entries of `other`, prefixing their names.
  void append(const ParamSet& other, std::string_view prefix = {}) {
    for (const auto& e : other.entries_) add(std::string(prefix) + e.name, e.tensor);
  }

 private:
  std::vector<Entry> entries_;
};

template <std::floating_point T>
bool identical(const ParamSet<T>& a, const ParamSet<T>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.name(i) != b.name(i) || !identical(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace alfa
