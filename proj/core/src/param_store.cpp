#include "inceptive/param_store.hpp"

#include "inceptive/error.hpp"

namespace inceptive {

template <typename T>
T& OrderedStore<T>::insert(std::string name, T value) {
  if (index_.contains(name)) throw ConfigError("duplicate entry '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
  return entries_.back().second;
}

template class OrderedStore<Parameter>;
template class OrderedStore<Tensor>;

Parameter& ParamStore::add(std::string name, Tensor value, bool decay) {
  Tensor grad = Tensor::zeros(value.shape());
  return insert(std::move(name), Parameter{std::move(value), std::move(grad), decay});
}

Parameter& ParamStore::at(std::string_view name) {
  if (Parameter* p = find(name)) return *p;
  throw ConfigError("missing parameter '" + std::string(name) + "'");
}

const Parameter& ParamStore::at(std::string_view name) const {
  if (const Parameter* p = find(name)) return *p;
  throw ConfigError("missing parameter '" + std::string(name) + "'");
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : entries_) p.grad.fill(0.0);
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : entries_) n += p.value.size();
  return n;
}

void ParamStore::merge(ParamStore other) {
  for (auto& [name, p] : other.entries_) insert(std::move(name), std::move(p));
}

Tensor& BufferStore::add(std::string name, Tensor value) { return insert(std::move(name), std::move(value)); }

Tensor& BufferStore::at(std::string_view name) {
  if (Tensor* t = find(name)) return *t;
  throw ConfigError("missing buffer '" + std::string(name) + "'");
}

const Tensor& BufferStore::at(std::string_view name) const {
  if (const Tensor* t = find(name)) return *t;
  throw ConfigError("missing buffer '" + std::string(name) + "'");
}

void BufferStore::merge(BufferStore other) {
  for (auto& [name, t] : other.entries_) insert(std::move(name), std::move(t));
}

}  // namespace inceptive
