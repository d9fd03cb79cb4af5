#pragma once

#include <array>

#include "hart/box.hpp"
#include "hart/ops.hpp"
#include "hart/tensor.hpp"

namespace hart {

// sigma(gamma) = w0 + w1*g + w2*g^2 + w3*g^3 + w4*g^4, clamped below at
// sigma_min. Fitted once before training; fixed afterwards.
struct SigmaPolynomial {
  std::array<double, 5> coeffs = {0.0, 0.5, 0.0, 0.0, 0.0};
  double sigma_min = 0.1;

  double eval(double gamma) const;
};

// Spatial attention state: Gaussian grid centres and the extent (span) it
// covers, per axis, in pixels. The grid stride is span / (n - 1) for an
// n-point grid and the Gaussian variance follows from the stride polynomial.
struct AttentionParams {
  double center_x = 0.0;
  double center_y = 0.0;
  double span_x = 1.0;
  double span_y = 1.0;

  double stride_x(std::size_t glimpse_w) const { return span_x / static_cast<double>(glimpse_w - 1); }
  double stride_y(std::size_t glimpse_h) const { return span_y / static_cast<double>(glimpse_h - 1); }

  Tensor to_tensor(bool requires_grad = false) const;
  static AttentionParams from_tensor(const Tensor& t);
  bool finite() const;
};

// center = box center, span = box extent; w/h below 1px are clamped to 1
// (reported through `clamped` when given).
AttentionParams box_to_attention(const BoundingBox& b, bool* clamped = nullptr);
BoundingBox attention_to_box(const AttentionParams& a);

enum class Axis { kX, kY };

// One Gaussian per row, normalized to sum 1, over integer pixel coordinates
// 0..image_len-1. att is a 4-tensor (cx, cy, sx, sy); the matrix is
// differentiable w.r.t. att.
Tensor build_attention_matrix(const Tensor& att, Axis axis, std::size_t image_len,
                              std::size_t glimpse_len, const SigmaPolynomial& poly);

// g_c = A_y x_c A_x^T per channel. image is [H, W, C] with C in {1, 3}.
Tensor extract_glimpse(const Tensor& image, const Tensor& att, std::size_t glimpse_h,
                       std::size_t glimpse_w, const SigmaPolynomial& poly);

// (cx, cy, sx, sy) -> (x, y, w, h), on tape.
Tensor attention_box_tensor(const Tensor& att);

}  // namespace hart
