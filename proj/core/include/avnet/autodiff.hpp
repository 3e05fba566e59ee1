#pragma once

#include <functional>
#include <string>
#include <vector>

#include "avnet/tensor.hpp"

namespace avnet {

// Receives dLoss/dOutput and returns one gradient per recorded input. An
// undefined tensor marks an input that receives no gradient.
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_output)>;

// Ordered record of differentiable operations. Operations are recorded while
// the tape is installed as the thread's current tape (see TapeScope) and at
// least one input requires a gradient.
//
// A tape supports one backward pass. Calling backward again without clear()
// is an error, and so is backpropagating into a leaf that still holds a
// gradient from an earlier pass.
class Tape {
 public:
  struct Entry {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string op, std::vector<Tensor> inputs, const Tensor& output,
              BackwardFn backward);

  // Populates grad on every requires_grad leaf (and retain_grad tensor)
  // reachable from loss.
  void backward(const Tensor& loss);

  void clear();
  std::size_t size() const { return entries_.size(); }
  const std::vector<Entry>& entries() const { return entries_; }
  bool backward_done() const { return backward_done_; }

 private:
  std::vector<Entry> entries_;
  bool backward_done_ = false;
};

// Installs a tape as the current thread's recording target for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

Tape* current_tape();

// True if a tape is recording and any of the inputs participates in autodiff.
bool should_record(std::initializer_list<const Tensor*> inputs);

// Marks out as a tracked non-leaf and records it on the current tape.
void record_op(std::string op, std::vector<Tensor> inputs, Tensor& out, BackwardFn backward);

// Runs backward on the current tape.
void backward(const Tensor& loss);

namespace testing {
// Scales every input gradient of the named op by (1 + factor) during
// backward. Empty name disables. Only used to exercise gradient checking.
void set_backward_corruption(const std::string& op, double factor = 0.1);
}  // namespace testing

}  // namespace avnet
