#pragma once

#include <span>
#include <vector>

#include "adaptvc/autodiff.h"

// Differentiable operations over tape values. Shapes are validated eagerly and
// mismatches throw std::invalid_argument naming both shapes.
namespace adaptvc::ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, Scalar s);
Var add_scalar(Var a, Scalar s);

// Row broadcast: a is [T x C], b holds C values.
Var add_row(Var a, Var b);
Var mul_row(Var a, Var b);

Var silu(Var a);
Var tanh(Var a);
Var square(Var a);
// ln(a + eps), a + eps must be positive.
Var log(Var a, Scalar eps);

Var matmul(Var a, Var b);
// a * b^T
Var matmul_nt(Var a, Var b);
Var linear(Var x, Var weight, Var bias);

// Rank-1 input: softmax over all values. Rank-2 input: axis 0 or 1.
Var softmax(Var a, int axis = -1);
// Per-row normalization to zero mean and unit variance, no affine part.
Var layer_norm(Var a, Scalar variance_eps = 1e-5);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, int64_t begin, int64_t end);
Var slice_rows(Var a, int64_t begin, int64_t end);
Var gather_rows(Var a, std::vector<int64_t> indices);
Var reshape(Var a, Shape shape);

// [T x C] -> [1 x C]
Var mean_rows(Var a);
// Non-overlapping mean over groups of k rows; T must be a multiple of k.
Var mean_pool_rows(Var a, int64_t k);

enum class Padding { kZero, kEdge };

// Unfold [T x C] into [T_out x (K*C)] patches for strided 1-D convolution.
// T_out = (T + pad_left + pad_right - K) / stride + 1.
Var im2col(Var a, int64_t kernel, int64_t stride, int64_t pad_left, int64_t pad_right,
           Padding padding = Padding::kZero);
// Same-length per-channel convolution; weight is [K x C], K odd.
Var depthwise_conv(Var a, Var weight, Padding padding = Padding::kEdge);

Var sum(Var a);
Var mean(Var a);
Var sum_squares(Var a);
Var mse(Var a, Var b);

// Σ_l w[l] * layers[l]; w is rank-1 of length layers.size().
Var weighted_sum(const std::vector<Var>& layers, Var weights);

}  // namespace adaptvc::ops
