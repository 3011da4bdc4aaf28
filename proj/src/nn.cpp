#include "tallkit/nn.hpp"

namespace tallkit::nn {

void AdamW::add_group(Group g) {
  for (const auto& p : g.params)
    slots_.push_back({Tensor::zeros(p.var->value.shape()),
                      Tensor::zeros(p.var->value.shape())});
  groups_.push_back(std::move(g));
}

void AdamW::step() {
  ++t_;
  const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  std::size_t slot = 0;
  for (const auto& g : groups_) {
    const float lr = lr_ * g.lr_mult;
    for (const auto& p : g.params) {
      auto& s = slots_[slot++];
      if (!p.var->grad.defined()) continue;
      float* w = p.var->value.data();
      const float* grad = p.var->grad.data();
      float* m = s.m.data();
      float* v = s.v.data();
      const std::size_t n = p.var->value.size();
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1_ * m[i] + (1.0f - beta1_) * grad[i];
        v[i] = beta2_ * v[i] + (1.0f - beta2_) * grad[i] * grad[i];
        const float mhat = m[i] / bc1;
        const float vhat = v[i] / bc2;
        w[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + wd_ * w[i]);
      }
    }
  }
}

void AdamW::zero_grad() {
  for (const auto& g : groups_)
    for (const auto& p : g.params) p.var->zero_grad();
}

}  // namespace tallkit::nn
