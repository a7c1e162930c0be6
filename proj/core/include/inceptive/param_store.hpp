#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "inceptive/tensor.hpp"

namespace inceptive {

struct Parameter {
  Tensor value;
  Tensor grad;
  // Whether decoupled weight decay applies (weights yes; biases and norm
  // affine terms no).
  bool decay = true;
};

// Insertion-ordered name -> T map. Iteration order is the insertion order.
template <typename T>
class OrderedStore {
 public:
  using Entry = std::pair<std::string, T>;

  bool contains(std::string_view name) const { return index_.contains(std::string(name)); }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  T* find(std::string_view name) {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }
  const T* find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &entries_[it->second].second;
  }

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

 protected:
  T& insert(std::string name, T value);

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Trainable parameters with their gradients.
class ParamStore : public OrderedStore<Parameter> {
 public:
  // Adds a parameter with a zero gradient. Duplicate names are a ConfigError.
  Parameter& add(std::string name, Tensor value, bool decay = true);

  // Throws ConfigError naming the parameter when it is missing.
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  const Tensor& value(std::string_view name) const { return at(name).value; }
  Tensor& grad(std::string_view name) { return at(name).grad; }

  void zero_grad();
  std::size_t element_count() const;

  // Copies every entry of `other` into this store (names must not clash).
  void merge(ParamStore other);
};

/// Non-trainable state such as batch-norm running statistics.
class BufferStore : public OrderedStore<Tensor> {
 public:
  Tensor& add(std::string name, Tensor value);
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  void merge(BufferStore other);
};

}  // namespace inceptive
