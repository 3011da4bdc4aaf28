#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tallkit/tensor.hpp"

namespace tallkit {

// Reverse-mode autodiff. Forward ops record nodes on the ambient tape
// (when one is active); backward() replays the tape in reverse. With no
// tape active, ops only compute values — that is eval mode, and it is
// also what makes detached/cached features gradient-free.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (!grad.defined()) grad = Tensor::zeros(value.shape());
    return grad;
  }
  void zero_grad() {
    if (grad.defined()) grad.fill(0.0f);
  }
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void record(const Var& v) {
    order_.push_back(v);
    retained_elements_ += v->value.size();
  }

  // Number of scalar activations retained for backward — the
  // hardware-independent memory proxy.
  std::size_t retained_elements() const { return retained_elements_; }
  const std::vector<Var>& order() const { return order_; }

 private:
  std::vector<Var> order_;
  std::size_t retained_elements_ = 0;
};

// Activates a tape for the current thread while in scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording (eval-mode forward) while in scope.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

bool grad_enabled();

// Leaf node: a parameter (requires_grad) or a constant input.
Var make_leaf(Tensor value, bool requires_grad = false);

// Gradient-stopped copy: shares the value, drops the graph.
Var detach(const Var& v);

// Result node for an op. Records on the tape when grad flows through.
Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn);

// Seeds d(loss)/d(loss) = 1 and propagates through the tape (loss must
// be scalar and live on the given tape).
void backward(Tape& tape, const Var& loss);

// Backward from an arbitrary node with an explicit cotangent.
void backward_with_cotangent(Tape& tape, const Var& out, const Tensor& cotangent);

}  // namespace tallkit
