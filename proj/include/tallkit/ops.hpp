#pragma once

#include <array>
#include <vector>

#include "tallkit/autograd.hpp"
#include "tallkit/rng.hpp"

// Differentiable ops over Var. Shapes follow the comments; all tensors
// are row-major float32. Convolutions zero-pad and recompute their
// im2col buffers in backward instead of retaining them.

namespace tallkit::ops {

Var add(const Var& a, const Var& b);                    // same shape
Var mul(const Var& a, const Var& b);                    // elementwise
Var mul_scalar(const Var& a, float s);
Var reshape(const Var& a, std::vector<int> shape);
Var slice_rows(const Var& a, int start, int count);     // along axis 0
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, int start, int count);     // a: [N, C]
Var concat_cols(const std::vector<Var>& parts);
Var transpose2d(const Var& a);                          // [M, N] -> [N, M]
// 3-D axis permutation, e.g. perm = {1, 0, 2}
Var permute3d(const Var& a, const std::array<int, 3>& perm);

Var matmul(const Var& a, const Var& b);                 // [M,K] x [K,N]
// x: [N, Cin], w: [Cin, Cout], bias: [Cout] or undefined Var{}
Var linear(const Var& x, const Var& w, const Var& bias);

Var relu(const Var& x);
Var gelu(const Var& x);
Var sigmoid(const Var& x);
// x: [N, C]; gamma, beta: [C]
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, float eps = 1e-5f);
Var softmax_rows(const Var& x);

// Inverted dropout; identity when !train or p == 0.
Var dropout(const Var& x, float p, Rng& rng, bool train);

Var mean_rows(const Var& x);          // [N, C] -> [C]
Var mean_axis1(const Var& x);         // [B, M, C] -> [B, C]
Var sum_all(const Var& x);            // -> [1]
Var mean_all(const Var& x);           // -> [1]

Var gather_rows(const Var& table, const std::vector<int>& indices);

// Rows of `a` land at positions idx_a, rows of `b` at idx_b; the index
// sets must partition [0, |a|+|b|).
Var interleave_rows(const Var& a, const Var& b, const std::vector<int>& idx_a,
                    const std::vector<int>& idx_b);

// x: [B, L, Cin], w: [k, Cin, Cout], bias: [Cout] or undefined
Var conv1d(const Var& x, const Var& w, const Var& bias, int stride, int pad);
// x: [B, H, W, Cin], w: [kh, kw, Cin, Cout]
Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad);

// [L, C] -> [out_len, C], linear interpolation with half-pixel centers
Var upsample_linear1d(const Var& x, int out_len);

int conv_out_len(int len, int k, int stride, int pad);

}  // namespace tallkit::ops
