#include "tallkit/autograd.hpp"

#include <stdexcept>

namespace tallkit {

namespace {
thread_local Tape* t_current_tape = nullptr;
}

Tape* Tape::current() { return t_current_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(t_current_tape) {
  t_current_tape = &tape;
}
TapeScope::~TapeScope() { t_current_tape = previous_; }

NoGradScope::NoGradScope() : previous_(t_current_tape) { t_current_tape = nullptr; }
NoGradScope::~NoGradScope() { t_current_tape = previous_; }

bool grad_enabled() { return t_current_tape != nullptr; }

Var make_leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return node;
}

Var detach(const Var& v) { return make_leaf(v->value, false); }

Var make_result(Tensor value, std::vector<Var> parents,
                std::function<void(Node&)> backward_fn) {
  Tape* tape = t_current_tape;
  bool needs_grad = false;
  if (tape) {
    for (const auto& p : parents)
      if (p->requires_grad) {
        needs_grad = true;
        break;
      }
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (needs_grad) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
    tape->record(node);
  }
  return node;
}

void backward_with_cotangent(Tape& tape, const Var& out, const Tensor& cotangent) {
  if (!out->value.same_shape(cotangent))
    throw std::invalid_argument("cotangent shape mismatch");
  Tensor& g = out->ensure_grad();
  const float* src = cotangent.data();
  float* dst = g.data();
  for (std::size_t i = 0; i < cotangent.size(); ++i) dst[i] += src[i];

  const auto& order = tape.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node& node = **it;
    if (node.requires_grad && node.grad.defined() && node.backward_fn)
      node.backward_fn(node);
  }
}

void backward(Tape& tape, const Var& loss) {
  if (loss->value.size() != 1)
    throw std::invalid_argument("backward() expects a scalar loss");
  backward_with_cotangent(tape, loss, Tensor::scalar(1.0f));
}

}  // namespace tallkit
