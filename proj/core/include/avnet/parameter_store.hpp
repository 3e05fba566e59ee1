#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "avnet/tensor.hpp"

namespace avnet {

// Named, insertion-ordered collection of model tensors. Trainable entries are
// optimized; the rest are buffers such as batch-norm running statistics.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  // Registers a tensor. Trainable tensors are flagged requires_grad. Throws
  // ParameterError on a duplicate name.
  Tensor add(const std::string& name, Tensor tensor, bool trainable);

  bool contains(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  Tensor get(const std::string& name) const { return entry(name).tensor; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  // Element count over trainable tensors only.
  std::int64_t trainable_count() const;

  void clear_grads();

  // Deep copy with fresh storage.
  ParameterStore clone() const;

  bool bit_equal(const ParameterStore& other) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace avnet
