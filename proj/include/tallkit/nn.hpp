#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "tallkit/ops.hpp"
#include "tallkit/rng.hpp"

namespace tallkit::nn {

struct Param {
  std::string name;
  Var var;
};

using ParamList = std::vector<Param>;

inline Var make_param(Tensor t) { return make_leaf(std::move(t), true); }

inline Tensor uniform_init(std::vector<int> shape, float bound, Rng& rng) {
  Tensor t(std::move(shape));
  float* p = t.data();
  for (std::size_t i = 0; i < t.size(); ++i)
    p[i] = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

// Kaiming-uniform for a weight whose fan-in is `fan_in`.
inline Tensor kaiming_init(std::vector<int> shape, int fan_in, Rng& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  return uniform_init(std::move(shape), bound, rng);
}

struct Linear {
  Var w, b;

  Linear() = default;
  Linear(int cin, int cout, Rng& rng) {
    w = make_param(kaiming_init({cin, cout}, cin, rng));
    b = make_param(Tensor::zeros({cout}));
  }
  Var forward(const Var& x) const { return ops::linear(x, w, b); }
  ParamList params(const std::string& prefix) const {
    return {{prefix + ".w", w}, {prefix + ".b", b}};
  }
};

struct Conv1d {
  Var w, b;
  int stride = 1, pad = 0;

  Conv1d() = default;
  Conv1d(int k, int cin, int cout, int stride_, int pad_, Rng& rng)
      : stride(stride_), pad(pad_) {
    w = make_param(kaiming_init({k, cin, cout}, k * cin, rng));
    b = make_param(Tensor::zeros({cout}));
  }
  Var forward(const Var& x) const { return ops::conv1d(x, w, b, stride, pad); }
  ParamList params(const std::string& prefix) const {
    return {{prefix + ".w", w}, {prefix + ".b", b}};
  }
};

struct Conv2d {
  Var w, b;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(int k, int cin, int cout, int stride_, int pad_, Rng& rng)
      : stride(stride_), pad(pad_) {
    w = make_param(kaiming_init({k, k, cin, cout}, k * k * cin, rng));
    b = make_param(Tensor::zeros({cout}));
  }
  Var forward(const Var& x) const { return ops::conv2d(x, w, b, stride, pad); }
  ParamList params(const std::string& prefix) const {
    return {{prefix + ".w", w}, {prefix + ".b", b}};
  }
};

struct LayerNorm {
  Var gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(int c) {
    gamma = make_param(Tensor::full({c}, 1.0f));
    beta = make_param(Tensor::zeros({c}));
  }
  Var forward(const Var& x) const { return ops::layer_norm(x, gamma, beta); }
  ParamList params(const std::string& prefix) const {
    return {{prefix + ".gamma", gamma}, {prefix + ".beta", beta}};
  }
};

// Decoupled-weight-decay Adam. Parameters are organized into groups;
// each group carries a learning-rate multiplier (the encoder runs at
// 0.1x, see the trainer).
class AdamW {
 public:
  struct Group {
    std::string name;
    ParamList params;
    float lr_mult = 1.0f;
  };

  AdamW(float lr, float weight_decay = 0.01f, float beta1 = 0.9f,
        float beta2 = 0.999f, float eps = 1e-8f)
      : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void add_group(Group g);
  void set_lr(float lr) { lr_ = lr; }
  float lr() const { return lr_; }
  void step();
  void zero_grad();

  const std::vector<Group>& groups() const { return groups_; }
  std::int64_t step_count() const { return t_; }

  // state round-tripping for checkpoints
  struct SlotState {
    Tensor m, v;
  };
  std::vector<SlotState>& slots() { return slots_; }
  void set_step_count(std::int64_t t) { t_ = t; }

 private:
  float lr_, wd_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Group> groups_;
  std::vector<SlotState> slots_;  // one per param, in group order
};

}  // namespace tallkit::nn
