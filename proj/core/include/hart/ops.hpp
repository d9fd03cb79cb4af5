#pragma once

#include "hart/rng.hpp"
#include "hart/tensor.hpp"

namespace hart {

// Elementwise binary ops with NumPy-style broadcasting (shapes aligned on
// trailing dimensions; a dimension must match or be 1). Gradients of
// broadcast inputs are reduced by summing over the broadcast positions.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // Hadamard
Tensor div(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);  // ties route grad to a
Tensor minimum(const Tensor& a, const Tensor& b);

// Unary
Tensor neg(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_op(const Tensor& x);
Tensor log_op(const Tensor& x);
Tensor exp_op(const Tensor& x);
// Zero gradient outside [lo, hi]; pass-through inside (boundary counts as inside).
Tensor clip(const Tensor& x, double lo, double hi);
Tensor scale(const Tensor& x, double k);
Tensor add_scalar(const Tensor& x, double k);

// Same values, no tape connection.
Tensor detach(const Tensor& x);

// matmul: [m,k]x[k,n] -> [m,n]; a 1-D right operand [k] is treated as a
// column, giving [m].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);  // 2-D

Tensor reshape(const Tensor& x, Shape new_shape);
// Half-open [start, stop) per axis.
Tensor slice(const Tensor& x, const std::vector<std::size_t>& starts,
             const std::vector<std::size_t>& stops);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdims);

enum class Pad { kValid, kSame };

// x: [H, W, Cin], kernel: [kh, kw, Cin, Cout] -> [H', W', Cout]
Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride = 1,
              Pad pad = Pad::kSame);
// Window and stride equal by default; requires exact tiling.
Tensor max_pool2d(const Tensor& x, std::size_t window = 2, std::size_t stride = 0);

// Row-wise softmax of a 2-D tensor, computed with a detached max shift
// (exact: softmax is invariant to per-row constant shifts).
Tensor softmax_rows(const Tensor& logits);

// Value-only row max of a 2-D tensor -> [rows, 1], never on tape.
Tensor rows_max_detached(const Tensor& x);

// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

bool all_finite(const Tensor& x);

}  // namespace hart
