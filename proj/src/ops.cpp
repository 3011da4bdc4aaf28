#include "tallkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "tallkit/kernels.hpp"

namespace tallkit::ops {

namespace {

std::size_t row_elems(const Tensor& t) {
  std::size_t r = 1;
  for (int i = 1; i < t.rank(); ++i) r *= static_cast<std::size_t>(t.dim(i));
  return r;
}

void check_rank(const Var& v, int rank, const char* who) {
  if (v->value.rank() != rank) throw std::invalid_argument(std::string(who) + ": bad rank");
}

}  // namespace

int conv_out_len(int len, int k, int stride, int pad) {
  return (len + 2 * pad - k) / stride + 1;
}

Var add(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) throw std::invalid_argument("add: shape mismatch");
  Tensor out(a->value.shape());
  kernels::add(out.size(), a->value.data(), b->value.data(), out.data());
  return make_result(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad)
      kernels::axpy(n.grad.size(), 1.0f, n.grad.data(), a->ensure_grad().data());
    if (b->requires_grad)
      kernels::axpy(n.grad.size(), 1.0f, n.grad.data(), b->ensure_grad().data());
  });
}

Var mul(const Var& a, const Var& b) {
  if (!a->value.same_shape(b->value)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out(a->value.shape());
  kernels::mul(out.size(), a->value.data(), b->value.data(), out.data());
  return make_result(std::move(out), {a, b}, [a, b](Node& n) {
    const std::size_t sz = n.grad.size();
    if (a->requires_grad) {
      Tensor tmp(a->value.shape());
      kernels::mul(sz, n.grad.data(), b->value.data(), tmp.data());
      kernels::axpy(sz, 1.0f, tmp.data(), a->ensure_grad().data());
    }
    if (b->requires_grad) {
      Tensor tmp(b->value.shape());
      kernels::mul(sz, n.grad.data(), a->value.data(), tmp.data());
      kernels::axpy(sz, 1.0f, tmp.data(), b->ensure_grad().data());
    }
  });
}

Var mul_scalar(const Var& a, float s) {
  Tensor out = a->value.clone();
  kernels::scale(out.size(), s, out.data());
  return make_result(std::move(out), {a}, [a, s](Node& n) {
    if (a->requires_grad)
      kernels::axpy(n.grad.size(), s, n.grad.data(), a->ensure_grad().data());
  });
}

Var reshape(const Var& a, std::vector<int> shape) {
  Tensor out = a->value.reshaped(shape);
  return make_result(std::move(out), {a}, [a](Node& n) {
    if (a->requires_grad)
      kernels::axpy(n.grad.size(), 1.0f, n.grad.data(), a->ensure_grad().data());
  });
}

Var slice_rows(const Var& a, int start, int count) {
  const Tensor& v = a->value;
  if (start < 0 || count < 0 || start + count > v.dim(0))
    throw std::out_of_range("slice_rows: range");
  std::vector<int> shape = v.shape();
  shape[0] = count;
  const std::size_t re = row_elems(v);
  Tensor out(shape);
  std::memcpy(out.data(), v.data() + start * re, count * re * sizeof(float));
  return make_result(std::move(out), {a}, [a, start, re](Node& n) {
    if (!a->requires_grad) return;
    float* gin = a->ensure_grad().data() + start * re;
    kernels::axpy(n.grad.size(), 1.0f, n.grad.data(), gin);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  std::vector<int> shape = parts[0]->value.shape();
  const std::size_t re = row_elems(parts[0]->value);
  int rows = 0;
  for (const auto& p : parts) {
    if (row_elems(p->value) != re)
      throw std::invalid_argument("concat_rows: row shape mismatch");
    rows += p->value.dim(0);
  }
  shape[0] = rows;
  Tensor out(shape);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::memcpy(out.data() + off, p->value.data(), p->value.size() * sizeof(float));
    off += p->value.size();
  }
  std::vector<Var> parents = parts;
  return make_result(std::move(out), parents, [parts](Node& n) {
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (p->requires_grad)
        kernels::axpy(p->value.size(), 1.0f, n.grad.data() + off,
                      p->ensure_grad().data());
      off += p->value.size();
    }
  });
}

Var slice_cols(const Var& a, int start, int count) {
  check_rank(a, 2, "slice_cols");
  const int rows = a->value.dim(0), cols = a->value.dim(1);
  if (start < 0 || count < 0 || start + count > cols)
    throw std::out_of_range("slice_cols: range");
  Tensor out({rows, count});
  for (int r = 0; r < rows; ++r)
    std::memcpy(out.data() + r * count, a->value.data() + r * cols + start,
                count * sizeof(float));
  return make_result(std::move(out), {a}, [a, start, count, rows, cols](Node& n) {
    if (!a->requires_grad) return;
    float* g = a->ensure_grad().data();
    const float* go = n.grad.data();
    for (int r = 0; r < rows; ++r)
      kernels::axpy(count, 1.0f, go + r * count, g + r * cols + start);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  const int rows = parts[0]->value.dim(0);
  int cols = 0;
  for (const auto& p : parts) {
    check_rank(p, 2, "concat_cols");
    if (p->value.dim(0) != rows)
      throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p->value.dim(1);
  }
  Tensor out({rows, cols});
  int at = 0;
  for (const auto& p : parts) {
    const int c = p->value.dim(1);
    for (int r = 0; r < rows; ++r)
      std::memcpy(out.data() + r * cols + at, p->value.data() + r * c,
                  c * sizeof(float));
    at += c;
  }
  std::vector<Var> parents = parts;
  return make_result(std::move(out), parents, [parts, rows, cols](Node& n) {
    int at = 0;
    for (const auto& p : parts) {
      const int c = p->value.dim(1);
      if (p->requires_grad) {
        float* g = p->ensure_grad().data();
        for (int r = 0; r < rows; ++r)
          kernels::axpy(c, 1.0f, n.grad.data() + r * cols + at, g + r * c);
      }
      at += c;
    }
  });
}

namespace {
void transpose_copy(const float* src, int m, int n, float* dst) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
}
}  // namespace

Var transpose2d(const Var& a) {
  check_rank(a, 2, "transpose2d");
  const int m = a->value.dim(0), n = a->value.dim(1);
  Tensor out({n, m});
  transpose_copy(a->value.data(), m, n, out.data());
  return make_result(std::move(out), {a}, [a, m, n](Node& node) {
    if (!a->requires_grad) return;
    Tensor gt({m, n});
    transpose_copy(node.grad.data(), n, m, gt.data());
    kernels::axpy(gt.size(), 1.0f, gt.data(), a->ensure_grad().data());
  });
}

Var permute3d(const Var& a, const std::array<int, 3>& perm) {
  check_rank(a, 3, "permute3d");
  const auto& s = a->value.shape();
  std::vector<int> os = {s[perm[0]], s[perm[1]], s[perm[2]]};
  Tensor out(os);
  const int d0 = s[0], d1 = s[1], d2 = s[2];
  const float* src = a->value.data();
  float* dst = out.data();
  int idx[3];
  for (idx[0] = 0; idx[0] < d0; ++idx[0])
    for (idx[1] = 0; idx[1] < d1; ++idx[1])
      for (idx[2] = 0; idx[2] < d2; ++idx[2]) {
        const std::size_t so =
            (static_cast<std::size_t>(idx[0]) * d1 + idx[1]) * d2 + idx[2];
        const std::size_t dsti =
            (static_cast<std::size_t>(idx[perm[0]]) * os[1] + idx[perm[1]]) * os[2] +
            idx[perm[2]];
        dst[dsti] = src[so];
      }
  return make_result(std::move(out), {a}, [a, perm, s, os](Node& node) {
    if (!a->requires_grad) return;
    float* g = a->ensure_grad().data();
    const float* go = node.grad.data();
    const int d0 = s[0], d1 = s[1], d2 = s[2];
    int idx[3];
    for (idx[0] = 0; idx[0] < d0; ++idx[0])
      for (idx[1] = 0; idx[1] < d1; ++idx[1])
        for (idx[2] = 0; idx[2] < d2; ++idx[2]) {
          const std::size_t so =
              (static_cast<std::size_t>(idx[0]) * d1 + idx[1]) * d2 + idx[2];
          const std::size_t dsti =
              (static_cast<std::size_t>(idx[perm[0]]) * os[1] + idx[perm[1]]) *
                  os[2] +
              idx[perm[2]];
          g[so] += go[dsti];
        }
  });
}

Var matmul(const Var& a, const Var& b) {
  check_rank(a, 2, "matmul");
  check_rank(b, 2, "matmul");
  const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
  if (b->value.dim(0) != k) throw std::invalid_argument("matmul: inner dim mismatch");
  Tensor out({m, n});
  kernels::gemm(m, k, n, 1.0f, a->value.data(), b->value.data(), 0.0f, out.data());
  return make_result(std::move(out), {a, b}, [a, b, m, k, n](Node& node) {
    const float* g = node.grad.data();
    if (a->requires_grad) {
      Tensor bt({n, k});
      transpose_copy(b->value.data(), k, n, bt.data());
      kernels::gemm(m, n, k, 1.0f, g, bt.data(), 1.0f, a->ensure_grad().data());
    }
    if (b->requires_grad) {
      Tensor at({k, m});
      transpose_copy(a->value.data(), m, k, at.data());
      kernels::gemm(k, m, n, 1.0f, at.data(), g, 1.0f, b->ensure_grad().data());
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  check_rank(x, 2, "linear");
  const int m = x->value.dim(0), k = x->value.dim(1), n = w->value.dim(1);
  if (w->value.dim(0) != k) throw std::invalid_argument("linear: weight shape");
  Tensor out({m, n});
  kernels::gemm(m, k, n, 1.0f, x->value.data(), w->value.data(), 0.0f, out.data());
  const bool has_bias = bias && bias->value.defined();
  if (has_bias) {
    if (bias->value.size() != static_cast<std::size_t>(n))
      throw std::invalid_argument("linear: bias shape");
    for (int r = 0; r < m; ++r)
      kernels::axpy(n, 1.0f, bias->value.data(), out.data() + r * n);
  }
  std::vector<Var> parents = {x, w};
  if (has_bias) parents.push_back(bias);
  return make_result(std::move(out), parents, [x, w, bias, has_bias, m, k, n](Node& node) {
    const float* g = node.grad.data();
    if (x->requires_grad) {
      Tensor wt({n, k});
      transpose_copy(w->value.data(), k, n, wt.data());
      kernels::gemm(m, n, k, 1.0f, g, wt.data(), 1.0f, x->ensure_grad().data());
    }
    if (w->requires_grad) {
      Tensor xt({k, m});
      transpose_copy(x->value.data(), m, k, xt.data());
      kernels::gemm(k, m, n, 1.0f, xt.data(), g, 1.0f, w->ensure_grad().data());
    }
    if (has_bias && bias->requires_grad) {
      float* gb = bias->ensure_grad().data();
      for (int r = 0; r < m; ++r) kernels::axpy(n, 1.0f, g + r * n, gb);
    }
  });
}

Var relu(const Var& x) {
  Tensor out(x->value.shape());
  kernels::relu(out.size(), x->value.data(), out.data());
  return make_result(std::move(out), {x}, [x](Node& n) {
    if (x->requires_grad)
      kernels::relu_backward(n.grad.size(), x->value.data(), n.grad.data(),
                             x->ensure_grad().data());
  });
}

Var gelu(const Var& x) {
  Tensor out(x->value.shape());
  const float* in = x->value.data();
  float* o = out.data();
  constexpr float inv_sqrt2 = 0.7071067811865476f;
  for (std::size_t i = 0; i < out.size(); ++i)
    o[i] = 0.5f * in[i] * (1.0f + std::erf(in[i] * inv_sqrt2));
  return make_result(std::move(out), {x}, [x](Node& n) {
    if (!x->requires_grad) return;
    const float* in = x->value.data();
    const float* g = n.grad.data();
    float* gi = x->ensure_grad().data();
    constexpr float inv_sqrt2 = 0.7071067811865476f;
    constexpr float inv_sqrt2pi = 0.3989422804014327f;
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const float cdf = 0.5f * (1.0f + std::erf(in[i] * inv_sqrt2));
      const float pdf = inv_sqrt2pi * std::exp(-0.5f * in[i] * in[i]);
      gi[i] += g[i] * (cdf + in[i] * pdf);
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out(x->value.shape());
  const float* in = x->value.data();
  float* o = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float v = in[i];
    o[i] = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v))
                     : std::exp(v) / (1.0f + std::exp(v));
  }
  Tensor saved = out;
  return make_result(std::move(out), {x}, [x, saved](Node& n) {
    if (!x->requires_grad) return;
    const float* y = saved.data();
    const float* g = n.grad.data();
    float* gi = x->ensure_grad().data();
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      gi[i] += g[i] * y[i] * (1.0f - y[i]);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps) {
  check_rank(x, 2, "layer_norm");
  const int rows = x->value.dim(0), cols = x->value.dim(1);
  Tensor out({rows, cols});
  Tensor norm({rows, cols});  // (x - mu) / sigma, reused in backward
  Tensor inv_std({rows});
  const float* in = x->value.data();
  const float* gm = gamma->value.data();
  const float* bt = beta->value.data();
  for (int r = 0; r < rows; ++r) {
    const float* xr = in + r * cols;
    const float mu = kernels::sum(cols, xr) / cols;
    float var = 0.0f;
    for (int c = 0; c < cols; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= cols;
    const float is = 1.0f / std::sqrt(var + eps);
    inv_std.data()[r] = is;
    float* nr = norm.data() + r * cols;
    float* orow = out.data() + r * cols;
    for (int c = 0; c < cols; ++c) {
      nr[c] = (xr[c] - mu) * is;
      orow[c] = gm[c] * nr[c] + bt[c];
    }
  }
  return make_result(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, norm, inv_std, rows, cols](Node& node) {
        const float* g = node.grad.data();
        const float* nm = norm.data();
        const float* gm = gamma->value.data();
        if (gamma->requires_grad) {
          float* gg = gamma->ensure_grad().data();
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) gg[c] += g[r * cols + c] * nm[r * cols + c];
        }
        if (beta->requires_grad) {
          float* gb = beta->ensure_grad().data();
          for (int r = 0; r < rows; ++r)
            kernels::axpy(cols, 1.0f, g + r * cols, gb);
        }
        if (x->requires_grad) {
          float* gx = x->ensure_grad().data();
          for (int r = 0; r < rows; ++r) {
            const float* gr = g + r * cols;
            const float* nr = nm + r * cols;
            float mean_gy = 0.0f, mean_gyn = 0.0f;
            for (int c = 0; c < cols; ++c) {
              const float gy = gr[c] * gm[c];
              mean_gy += gy;
              mean_gyn += gy * nr[c];
            }
            mean_gy /= cols;
            mean_gyn /= cols;
            const float is = inv_std.data()[r];
            for (int c = 0; c < cols; ++c) {
              const float gy = gr[c] * gm[c];
              gx[r * cols + c] += is * (gy - mean_gy - nr[c] * mean_gyn);
            }
          }
        }
      });
}

Var softmax_rows(const Var& x) {
  check_rank(x, 2, "softmax_rows");
  const int rows = x->value.dim(0), cols = x->value.dim(1);
  Tensor out({rows, cols});
  const float* in = x->value.data();
  for (int r = 0; r < rows; ++r) {
    const float* xr = in + r * cols;
    float* orow = out.data() + r * cols;
    const float mx = kernels::max_value(cols, xr);
    float denom = 0.0f;
    for (int c = 0; c < cols; ++c) {
      orow[c] = std::exp(xr[c] - mx);
      denom += orow[c];
    }
    kernels::scale(cols, 1.0f / denom, orow);
  }
  Tensor saved = out;
  return make_result(std::move(out), {x}, [x, saved, rows, cols](Node& node) {
    if (!x->requires_grad) return;
    const float* y = saved.data();
    const float* g = node.grad.data();
    float* gx = x->ensure_grad().data();
    for (int r = 0; r < rows; ++r) {
      const float* yr = y + r * cols;
      const float* gr = g + r * cols;
      const float dotv = kernels::dot(cols, gr, yr);
      for (int c = 0; c < cols; ++c) gx[r * cols + c] += yr[c] * (gr[c] - dotv);
    }
  });
}

Var dropout(const Var& x, float p, Rng& rng, bool train) {
  if (!train || p <= 0.0f) return x;
  if (p >= 1.0f) throw std::invalid_argument("dropout: p must be < 1");
  Tensor mask(x->value.shape());
  const float keep_scale = 1.0f / (1.0f - p);
  float* m = mask.data();
  for (std::size_t i = 0; i < mask.size(); ++i)
    m[i] = rng.uniform() < p ? 0.0f : keep_scale;
  Tensor out(x->value.shape());
  kernels::mul(out.size(), x->value.data(), mask.data(), out.data());
  return make_result(std::move(out), {x}, [x, mask](Node& n) {
    if (!x->requires_grad) return;
    Tensor tmp(n.grad.shape());
    kernels::mul(tmp.size(), n.grad.data(), mask.data(), tmp.data());
    kernels::axpy(tmp.size(), 1.0f, tmp.data(), x->ensure_grad().data());
  });
}

Var mean_rows(const Var& x) {
  check_rank(x, 2, "mean_rows");
  const int rows = x->value.dim(0), cols = x->value.dim(1);
  Tensor out({cols});
  for (int r = 0; r < rows; ++r)
    kernels::axpy(cols, 1.0f / rows, x->value.data() + r * cols, out.data());
  return make_result(std::move(out), {x}, [x, rows, cols](Node& n) {
    if (!x->requires_grad) return;
    float* g = x->ensure_grad().data();
    for (int r = 0; r < rows; ++r)
      kernels::axpy(cols, 1.0f / rows, n.grad.data(), g + r * cols);
  });
}

Var mean_axis1(const Var& x) {
  check_rank(x, 3, "mean_axis1");
  const int b = x->value.dim(0), m = x->value.dim(1), c = x->value.dim(2);
  Tensor out({b, c});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < m; ++j)
      kernels::axpy(c, 1.0f / m, x->value.data() + (i * m + j) * c,
                    out.data() + i * c);
  return make_result(std::move(out), {x}, [x, b, m, c](Node& n) {
    if (!x->requires_grad) return;
    float* g = x->ensure_grad().data();
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < m; ++j)
        kernels::axpy(c, 1.0f / m, n.grad.data() + i * c, g + (i * m + j) * c);
  });
}

Var sum_all(const Var& x) {
  Tensor out = Tensor::scalar(kernels::sum(x->value.size(), x->value.data()));
  return make_result(std::move(out), {x}, [x](Node& n) {
    if (x->requires_grad) {
      const float g = n.grad.item();
      float* gx = x->ensure_grad().data();
      for (std::size_t i = 0; i < x->value.size(); ++i) gx[i] += g;
    }
  });
}

Var mean_all(const Var& x) {
  return mul_scalar(sum_all(x), 1.0f / static_cast<float>(x->value.size()));
}

Var gather_rows(const Var& table, const std::vector<int>& indices) {
  check_rank(table, 2, "gather_rows");
  const int rows = table->value.dim(0), cols = table->value.dim(1);
  Tensor out({static_cast<int>(indices.size()), cols});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int r = indices[i];
    if (r < 0 || r >= rows) throw std::out_of_range("gather_rows: index");
    std::memcpy(out.data() + i * cols, table->value.data() + r * cols,
                cols * sizeof(float));
  }
  return make_result(std::move(out), {table}, [table, indices, cols](Node& n) {
    if (!table->requires_grad) return;
    float* g = table->ensure_grad().data();
    for (std::size_t i = 0; i < indices.size(); ++i)
      kernels::axpy(cols, 1.0f, n.grad.data() + i * cols, g + indices[i] * cols);
  });
}

Var interleave_rows(const Var& a, const Var& b, const std::vector<int>& idx_a,
                    const std::vector<int>& idx_b) {
  if (static_cast<int>(idx_a.size()) != a->value.dim(0) ||
      static_cast<int>(idx_b.size()) != b->value.dim(0))
    throw std::invalid_argument("interleave_rows: index count mismatch");
  const std::size_t re = row_elems(a->value);
  if (row_elems(b->value) != re)
    throw std::invalid_argument("interleave_rows: row shape mismatch");
  const int total = a->value.dim(0) + b->value.dim(0);
  std::vector<char> seen(static_cast<std::size_t>(total), 0);
  auto check = [&](int r) {
    if (r < 0 || r >= total || seen[static_cast<std::size_t>(r)])
      throw std::invalid_argument("interleave_rows: indices must partition rows");
    seen[static_cast<std::size_t>(r)] = 1;
  };
  for (int r : idx_a) check(r);
  for (int r : idx_b) check(r);

  std::vector<int> shape = a->value.shape();
  shape[0] = total;
  Tensor out(shape);
  for (std::size_t i = 0; i < idx_a.size(); ++i)
    std::memcpy(out.data() + idx_a[i] * re, a->value.data() + i * re,
                re * sizeof(float));
  for (std::size_t i = 0; i < idx_b.size(); ++i)
    std::memcpy(out.data() + idx_b[i] * re, b->value.data() + i * re,
                re * sizeof(float));
  return make_result(std::move(out), {a, b}, [a, b, idx_a, idx_b, re](Node& n) {
    if (a->requires_grad) {
      float* g = a->ensure_grad().data();
      for (std::size_t i = 0; i < idx_a.size(); ++i)
        kernels::axpy(re, 1.0f, n.grad.data() + idx_a[i] * re, g + i * re);
    }
    if (b->requires_grad) {
      float* g = b->ensure_grad().data();
      for (std::size_t i = 0; i < idx_b.size(); ++i)
        kernels::axpy(re, 1.0f, n.grad.data() + idx_b[i] * re, g + i * re);
    }
  });
}

namespace {

// col: [Lout, k*Cin]
void im2col_1d(const float* x, int L, int cin, int k, int stride, int pad,
               int lout, float* col) {
  for (int o = 0; o < lout; ++o) {
    float* crow = col + static_cast<std::size_t>(o) * k * cin;
    for (int t = 0; t < k; ++t) {
      const int src = o * stride - pad + t;
      if (src < 0 || src >= L) {
        std::memset(crow + t * cin, 0, cin * sizeof(float));
      } else {
        std::memcpy(crow + t * cin, x + static_cast<std::size_t>(src) * cin,
                    cin * sizeof(float));
      }
    }
  }
}

void col2im_1d(const float* col, int L, int cin, int k, int stride, int pad,
               int lout, float* gx) {
  for (int o = 0; o < lout; ++o) {
    const float* crow = col + static_cast<std::size_t>(o) * k * cin;
    for (int t = 0; t < k; ++t) {
      const int src = o * stride - pad + t;
      if (src >= 0 && src < L)
        kernels::axpy(cin, 1.0f, crow + t * cin,
                      gx + static_cast<std::size_t>(src) * cin);
    }
  }
}

// col: [Hout*Wout, kh*kw*Cin]
void im2col_2d(const float* x, int h, int w, int cin, int k, int stride, int pad,
               int hout, int wout, float* col) {
  for (int oy = 0; oy < hout; ++oy)
    for (int ox = 0; ox < wout; ++ox) {
      float* crow =
          col + (static_cast<std::size_t>(oy) * wout + ox) * k * k * cin;
      for (int ky = 0; ky < k; ++ky) {
        const int sy = oy * stride - pad + ky;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = ox * stride - pad + kx;
          float* dst = crow + (ky * k + kx) * cin;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
            std::memset(dst, 0, cin * sizeof(float));
          } else {
            std::memcpy(dst, x + (static_cast<std::size_t>(sy) * w + sx) * cin,
                        cin * sizeof(float));
          }
        }
      }
    }
}

void col2im_2d(const float* col, int h, int w, int cin, int k, int stride,
               int pad, int hout, int wout, float* gx) {
  for (int oy = 0; oy < hout; ++oy)
    for (int ox = 0; ox < wout; ++ox) {
      const float* crow =
          col + (static_cast<std::size_t>(oy) * wout + ox) * k * k * cin;
      for (int ky = 0; ky < k; ++ky) {
        const int sy = oy * stride - pad + ky;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int sx = ox * stride - pad + kx;
          if (sx < 0 || sx >= w) continue;
          kernels::axpy(cin, 1.0f, crow + (ky * k + kx) * cin,
                        gx + (static_cast<std::size_t>(sy) * w + sx) * cin);
        }
      }
    }
}

}  // namespace

Var conv1d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
  check_rank(x, 3, "conv1d");
  check_rank(w, 3, "conv1d weight");
  const int batch = x->value.dim(0), L = x->value.dim(1), cin = x->value.dim(2);
  const int k = w->value.dim(0), cout = w->value.dim(2);
  if (w->value.dim(1) != cin) throw std::invalid_argument("conv1d: channel mismatch");
  const int lout = conv_out_len(L, k, stride, pad);
  if (lout <= 0) throw std::invalid_argument("conv1d: output length <= 0");

  const bool has_bias = bias && bias->value.defined();
  Tensor out({batch, lout, cout});
  Tensor col({lout, k * cin});
  const float* wdata = w->value.data();  // [k*cin, cout] layout
  for (int bidx = 0; bidx < batch; ++bidx) {
    const float* xb = x->value.data() + static_cast<std::size_t>(bidx) * L * cin;
    im2col_1d(xb, L, cin, k, stride, pad, lout, col.data());
    float* ob = out.data() + static_cast<std::size_t>(bidx) * lout * cout;
    kernels::gemm(lout, k * cin, cout, 1.0f, col.data(), wdata, 0.0f, ob);
    if (has_bias)
      for (int o = 0; o < lout; ++o)
        kernels::axpy(cout, 1.0f, bias->value.data(), ob + o * cout);
  }
  std::vector<Var> parents = {x, w};
  if (has_bias) parents.push_back(bias);
  return make_result(
      std::move(out), parents,
      [x, w, bias, has_bias, batch, L, cin, k, cout, stride, pad, lout](Node& node) {
        Tensor col({lout, k * cin});
        Tensor colT({k * cin, lout});
        Tensor wT;
        if (x->requires_grad) {
          wT = Tensor({cout, k * cin});
          transpose_copy(w->value.data(), k * cin, cout, wT.data());
        }
        for (int bidx = 0; bidx < batch; ++bidx) {
          const float* gb =
              node.grad.data() + static_cast<std::size_t>(bidx) * lout * cout;
          const float* xb =
              x->value.data() + static_cast<std::size_t>(bidx) * L * cin;
          if (w->requires_grad || x->requires_grad)
            im2col_1d(xb, L, cin, k, stride, pad, lout, col.data());
          if (w->requires_grad) {
            transpose_copy(col.data(), lout, k * cin, colT.data());
            kernels::gemm(k * cin, lout, cout, 1.0f, colT.data(), gb, 1.0f,
                          w->ensure_grad().data());
          }
          if (x->requires_grad) {
            Tensor gcol({lout, k * cin});
            kernels::gemm(lout, cout, k * cin, 1.0f, gb, wT.data(), 0.0f,
                          gcol.data());
            col2im_1d(gcol.data(), L, cin, k, stride, pad, lout,
                      x->ensure_grad().data() +
                          static_cast<std::size_t>(bidx) * L * cin);
          }
          if (has_bias && bias->requires_grad) {
            float* gbias = bias->ensure_grad().data();
            for (int o = 0; o < lout; ++o)
              kernels::axpy(cout, 1.0f, gb + o * cout, gbias);
          }
        }
      });
}

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
  check_rank(x, 4, "conv2d");
  check_rank(w, 4, "conv2d weight");
  const int batch = x->value.dim(0), h = x->value.dim(1), wdt = x->value.dim(2),
            cin = x->value.dim(3);
  const int k = w->value.dim(0), cout = w->value.dim(3);
  if (w->value.dim(1) != k || w->value.dim(2) != cin)
    throw std::invalid_argument("conv2d: weight shape");
  const int hout = conv_out_len(h, k, stride, pad);
  const int wout = conv_out_len(wdt, k, stride, pad);
  if (hout <= 0 || wout <= 0) throw std::invalid_argument("conv2d: empty output");

  const bool has_bias = bias && bias->value.defined();
  const int patch = k * k * cin;
  Tensor out({batch, hout, wout, cout});
  Tensor col({hout * wout, patch});
  for (int bidx = 0; bidx < batch; ++bidx) {
    const float* xb =
        x->value.data() + static_cast<std::size_t>(bidx) * h * wdt * cin;
    im2col_2d(xb, h, wdt, cin, k, stride, pad, hout, wout, col.data());
    float* ob =
        out.data() + static_cast<std::size_t>(bidx) * hout * wout * cout;
    kernels::gemm(hout * wout, patch, cout, 1.0f, col.data(), w->value.data(),
                  0.0f, ob);
    if (has_bias)
      for (int o = 0; o < hout * wout; ++o)
        kernels::axpy(cout, 1.0f, bias->value.data(), ob + o * cout);
  }
  std::vector<Var> parents = {x, w};
  if (has_bias) parents.push_back(bias);
  return make_result(
      std::move(out), parents,
      [x, w, bias, has_bias, batch, h, wdt, cin, k, cout, stride, pad, hout,
       wout, patch](Node& node) {
        Tensor col({hout * wout, patch});
        Tensor colT({patch, hout * wout});
        Tensor wT;
        if (x->requires_grad) {
          wT = Tensor({cout, patch});
          transpose_copy(w->value.data(), patch, cout, wT.data());
        }
        for (int bidx = 0; bidx < batch; ++bidx) {
          const float* gb = node.grad.data() +
                            static_cast<std::size_t>(bidx) * hout * wout * cout;
          const float* xb =
              x->value.data() + static_cast<std::size_t>(bidx) * h * wdt * cin;
          if (w->requires_grad || x->requires_grad)
            im2col_2d(xb, h, wdt, cin, k, stride, pad, hout, wout, col.data());
          if (w->requires_grad) {
            transpose_copy(col.data(), hout * wout, patch, colT.data());
            kernels::gemm(patch, hout * wout, cout, 1.0f, colT.data(), gb, 1.0f,
                          w->ensure_grad().data());
          }
          if (x->requires_grad) {
            Tensor gcol({hout * wout, patch});
            kernels::gemm(hout * wout, cout, patch, 1.0f, gb, wT.data(), 0.0f,
                          gcol.data());
            col2im_2d(gcol.data(), h, wdt, cin, k, stride, pad, hout, wout,
                      x->ensure_grad().data() +
                          static_cast<std::size_t>(bidx) * h * wdt * cin);
          }
          if (has_bias && bias->requires_grad) {
            float* gbias = bias->ensure_grad().data();
            for (int o = 0; o < hout * wout; ++o)
              kernels::axpy(cout, 1.0f, gb + o * cout, gbias);
          }
        }
      });
}

Var upsample_linear1d(const Var& x, int out_len) {
  check_rank(x, 2, "upsample_linear1d");
  const int in_len = x->value.dim(0), c = x->value.dim(1);
  if (out_len <= 0) throw std::invalid_argument("upsample_linear1d: out_len");
  Tensor out({out_len, c});
  const double ratio = static_cast<double>(in_len) / out_len;
  // (lo index, weight of hi) per output row; half-pixel centers
  std::vector<std::pair<int, float>> plan(static_cast<std::size_t>(out_len));
  for (int i = 0; i < out_len; ++i) {
    double src = (i + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    if (src > in_len - 1) src = in_len - 1;
    const int lo = static_cast<int>(src);
    const float whi = static_cast<float>(src - lo);
    plan[static_cast<std::size_t>(i)] = {lo, whi};
    const int hi = std::min(lo + 1, in_len - 1);
    const float* xlo = x->value.data() + lo * c;
    const float* xhi = x->value.data() + hi * c;
    float* o = out.data() + i * c;
    for (int j = 0; j < c; ++j) o[j] = (1.0f - whi) * xlo[j] + whi * xhi[j];
  }
  return make_result(std::move(out), {x}, [x, plan, in_len, c](Node& n) {
    if (!x->requires_grad) return;
    float* g = x->ensure_grad().data();
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const auto [lo, whi] = plan[i];
      const int hi = std::min(lo + 1, in_len - 1);
      const float* go = n.grad.data() + i * c;
      kernels::axpy(c, 1.0f - whi, go, g + lo * c);
      kernels::axpy(c, whi, go, g + hi * c);
    }
  });
}

}  // namespace tallkit::ops
