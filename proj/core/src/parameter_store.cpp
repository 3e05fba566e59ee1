#include "avnet/parameter_store.hpp"

namespace avnet {

Tensor ParameterStore::add(const std::string& name, Tensor tensor, bool trainable) {
  if (index_.contains(name)) throw ParameterError("duplicate parameter name '" + name + "'");
  if (trainable) tensor.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, tensor, trainable});
  return tensor;
}

bool ParameterStore::contains(const std::string& name) const { return index_.contains(name); }

const ParameterStore::Entry& ParameterStore::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ParameterError("unknown parameter '" + name + "'");
  return entries_[it->second];
}

std::int64_t ParameterStore::trainable_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.tensor.numel();
  }
  return n;
}

void ParameterStore::clear_grads() {
  for (auto& e : entries_) e.tensor.clear_grad();
}

ParameterStore ParameterStore::clone() const {
  ParameterStore copy;
  for (const auto& e : entries_) copy.add(e.name, e.tensor.clone(), e.trainable);
  return copy;
}

bool ParameterStore::bit_equal(const ParameterStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.trainable != b.trainable || !a.tensor.bit_equal(b.tensor)) {
      return false;
    }
  }
  return true;
}

}  // namespace avnet
