#pragma once

#include "fakeshield/nn/tensor.hpp"

#include <span>
#include <vector>

namespace fakeshield::nn {

// Linear algebra
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& a);

// Elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_row(const Var& a, const Var& row);     // row: [1, cols], broadcast down
Var add_col(const Var& a, const Var& col);     // col: [rows, 1], broadcast across
Var mul_col(const Var& a, const Var& col);     // per-row gain
Var relu(const Var& a);
Var gelu(const Var& a);
Var sigmoid(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }

// Row-wise normalisation / attention helpers
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var softmax_rows(const Var& scores, bool causal);

// Shape plumbing
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& table, std::span<const int> ids);
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);

// Reductions
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var mean_cols(const Var& a);  // [r, c] -> [r, 1]

// Spatial ops on feature maps stored as [channels, height*width].
Var conv2d(const Var& x, int height, int width, const Var& weight, int kernel, int stride,
           int pad);
Var im2col(const Var& x, int height, int width, int kernel, int stride, int pad);
Var max_pool2(const Var& x, int height, int width);
Var upsample_bilinear(const Var& x, int height, int width, int out_height, int out_width);

// Losses
//
// Token-level mean cross-entropy. targets[i] < 0 marks a position excluded
// from the loss. Throws when every position is excluded.
Var cross_entropy(const Var& logits, std::span<const int> targets);
// Mean binary cross-entropy on logits against a {0,1} target map.
Var bce_with_logits(const Var& logits, const Matrix& target);
// Soft Dice, 1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps).
Var soft_dice(const Var& probs, const Matrix& target, double eps);

}  // namespace fakeshield::nn
