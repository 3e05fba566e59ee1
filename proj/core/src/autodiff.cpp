#include "avnet/autodiff.hpp"

#include <unordered_map>

namespace avnet {

namespace {

thread_local Tape* g_current_tape = nullptr;

struct Corruption {
  std::string op;
  double factor = 0.0;
};

Corruption& corruption() {
  static Corruption c;
  return c;
}

void accumulate(Tensor& into, const Tensor& add) {
  dispatch(into.dtype(), [&]<typename T>() {
    auto dst = into.data<T>();
    auto src = add.data<T>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  });
}

void scale(Tensor& t, double factor) {
  dispatch(t.dtype(), [&]<typename T>() {
    for (auto& v : t.data<T>()) v = static_cast<T>(v * factor);
  });
}

}  // namespace

void Tape::record(std::string op, std::vector<Tensor> inputs, const Tensor& output,
                  BackwardFn backward) {
  if (backward_done_) {
    throw AutodiffError("recording '" + op + "' on a tape that already ran backward");
  }
  entries_.push_back({std::move(op), std::move(inputs), output, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw AutodiffError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? loss.shape().str() : std::string("<undefined>")));
  }
  if (backward_done_) {
    throw AutodiffError("backward already ran on this tape; clear it and re-run the forward pass");
  }

  std::size_t start = entries_.size();
  for (std::size_t i = entries_.size(); i-- > 0;) {
    if (entries_[i].output.same_storage(loss)) {
      start = i;
      break;
    }
  }
  if (start == entries_.size()) {
    throw AutodiffError("backward on a tensor that was not produced on this tape");
  }

  // Gradients returned by backward rules may alias each other or grad_out, so
  // a slot is copied before the first in-place accumulation.
  struct Slot {
    Tensor grad;
    bool owned = false;
  };
  std::unordered_map<const TensorImpl*, Slot> grads;
  grads.emplace(loss.impl(), Slot{Tensor::full(loss.shape(), 1.0, loss.dtype()), true});

  const auto& bad = corruption();
  for (std::size_t i = start + 1; i-- > 0;) {
    Entry& entry = entries_[i];
    auto it = grads.find(entry.output.impl());
    if (it == grads.end()) continue;
    Tensor grad_out = it->second.grad;
    if (entry.output.impl()->retain_grad) {
      entry.output.impl()->grad = TensorAccess::handle(grad_out.clone());
    }
    // Intermediate gradients are not needed once consumed.
    grads.erase(it);

    std::vector<Tensor> input_grads = entry.backward(grad_out);
    if (input_grads.size() != entry.inputs.size()) {
      throw AutodiffError("backward rule of '" + entry.op + "' returned " +
                          std::to_string(input_grads.size()) + " gradients for " +
                          std::to_string(entry.inputs.size()) + " inputs");
    }
    for (std::size_t k = 0; k < input_grads.size(); ++k) {
      Tensor& g = input_grads[k];
      const Tensor& input = entry.inputs[k];
      if (!g.defined() || !input.requires_grad()) continue;
      if (g.shape() != input.shape()) {
        throw AutodiffError("backward rule of '" + entry.op + "' produced gradient of shape " +
                            g.shape().str() + " for input of shape " + input.shape().str());
      }
      if (!bad.op.empty() && bad.op == entry.op) scale(g, 1.0 + bad.factor);
      auto [slot, inserted] = grads.try_emplace(input.impl(), Slot{g, false});
      if (!inserted) {
        if (!slot->second.owned) {
          slot->second.grad = slot->second.grad.clone();
          slot->second.owned = true;
        }
        accumulate(slot->second.grad, g);
      }
    }
  }

  // Everything left in the map belongs to tensors with no producing entry
  // between start and the beginning of the tape, i.e. leaves.
  for (std::size_t i = 0; i <= start; ++i) {
    for (const Tensor& input : entries_[i].inputs) {
      auto it = grads.find(input.impl());
      if (it == grads.end()) continue;
      TensorImpl* impl = input.impl();
      if (impl->is_leaf) {
        if (impl->grad) {
          throw AutodiffError(
              "leaf tensor already holds a gradient; clear gradients before another backward");
        }
        impl->grad = TensorAccess::handle(it->second.grad.clone());
      }
      grads.erase(it);
    }
  }
  backward_done_ = true;
}

void Tape::clear() {
  entries_.clear();
  backward_done_ = false;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_current_tape) { g_current_tape = &tape; }
TapeScope::~TapeScope() { g_current_tape = previous_; }

NoGradGuard::NoGradGuard() : previous_(g_current_tape) { g_current_tape = nullptr; }
NoGradGuard::~NoGradGuard() { g_current_tape = previous_; }

Tape* current_tape() { return g_current_tape; }

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_current_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void record_op(std::string op, std::vector<Tensor> inputs, Tensor& out, BackwardFn backward) {
  TensorImpl* impl = out.impl();
  impl->requires_grad = true;
  impl->is_leaf = false;
  g_current_tape->record(std::move(op), std::move(inputs), out, std::move(backward));
}

void backward(const Tensor& loss) {
  Tape* tape = current_tape();
  if (tape == nullptr) throw AutodiffError("backward called with no active tape");
  tape->backward(loss);
}

namespace testing {
void set_backward_corruption(const std::string& op, double factor) { corruption() = {op, factor}; }
}  // namespace testing

}  // namespace avnet
