#include "hart/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace hart {

double SigmaPolynomial::eval(double gamma) const {
  double acc = 0.0;
  for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * gamma + coeffs[i];
  return std::max(acc, sigma_min);
}

Tensor AttentionParams::to_tensor(bool requires_grad) const {
  return Tensor::from({4}, {center_x, center_y, span_x, span_y}, requires_grad);
}

AttentionParams AttentionParams::from_tensor(const Tensor& t) {
  if (t.size() != 4) {
    throw std::invalid_argument("AttentionParams::from_tensor: expected 4 values, got shape " +
                                shape_str(t.shape()));
  }
  return {t.at(0), t.at(1), t.at(2), t.at(3)};
}

bool AttentionParams::finite() const {
  return std::isfinite(center_x) && std::isfinite(center_y) && std::isfinite(span_x) &&
         std::isfinite(span_y);
}

AttentionParams box_to_attention(const BoundingBox& b, bool* clamped) {
  const double w = std::max(b.w, 1.0);
  const double h = std::max(b.h, 1.0);
  if (clamped) *clamped = (w != b.w) || (h != b.h);
  AttentionParams a;
  a.span_x = w;
  a.span_y = h;
  a.center_x = b.x + 0.5 * w;
  a.center_y = b.y + 0.5 * h;
  return a;
}

BoundingBox attention_to_box(const AttentionParams& a) {
  BoundingBox b;
  b.w = a.span_x;
  b.h = a.span_y;
  b.x = a.center_x - 0.5 * a.span_x;
  b.y = a.center_y - 0.5 * a.span_y;
  return b;
}

namespace {

// Horner evaluation of the sigma polynomial on a scalar tensor; the
// coefficients are fixed so gradient flows only through gamma.
Tensor sigma_tensor(const Tensor& gamma, const SigmaPolynomial& poly) {
  Tensor acc = Tensor::scalar(poly.coeffs.back());
  for (std::size_t i = poly.coeffs.size() - 1; i-- > 0;) {
    acc = add_scalar(mul(acc, gamma), poly.coeffs[i]);
  }
  return clip(acc, poly.sigma_min, 1e300);
}

}  // namespace

Tensor build_attention_matrix(const Tensor& att, Axis axis, std::size_t image_len,
                              std::size_t glimpse_len, const SigmaPolynomial& poly) {
  if (att.size() != 4) {
    throw std::invalid_argument("build_attention_matrix: attention must have 4 values, got " +
                                shape_str(att.shape()));
  }
  if (!all_finite(att))
    throw std::runtime_error("build_attention_matrix: non-finite attention parameters");
  if (image_len < 1) throw std::invalid_argument("build_attention_matrix: image_len must be >= 1");
  if (glimpse_len < 2)
    throw std::invalid_argument("build_attention_matrix: glimpse_len must be >= 2");

  const std::size_t c_idx = axis == Axis::kX ? 0 : 1;
  const std::size_t s_idx = axis == Axis::kX ? 2 : 3;
  Tensor center = slice(att, {c_idx}, {c_idx + 1});
  Tensor span = clip(slice(att, {s_idx}, {s_idx + 1}), 1.0, 1e300);

  const double n1 = static_cast<double>(glimpse_len - 1);
  Tensor gamma = scale(span, 1.0 / n1);
  Tensor sigma = sigma_tensor(gamma, poly);
  Tensor two_var = scale(mul(sigma, sigma), 2.0);

  Tensor row_idx = Tensor::zeros({glimpse_len});
  for (std::size_t r = 0; r < glimpse_len; ++r) row_idx.at(r) = static_cast<double>(r);
  Tensor pix_idx = Tensor::zeros({1, image_len});
  for (std::size_t i = 0; i < image_len; ++i) pix_idx.at(0, i) = static_cast<double>(i);

  // mu_r = center - span/2 + r * gamma
  Tensor mu = add(sub(center, scale(span, 0.5)), mul(gamma, row_idx));
  Tensor d = sub(reshape(mu, {glimpse_len, 1}), pix_idx);
  Tensor logits = neg(div(mul(d, d), two_var));
  return softmax_rows(logits);
}

Tensor extract_glimpse(const Tensor& image, const Tensor& att, std::size_t glimpse_h,
                       std::size_t glimpse_w, const SigmaPolynomial& poly) {
  if (image.rank() != 3)
    throw std::invalid_argument("extract_glimpse: image must be [H,W,C], got " +
                                shape_str(image.shape()));
  const std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  if (C != 1 && C != 3)
    throw std::invalid_argument("extract_glimpse: channels must be 1 or 3, got " +
                                std::to_string(C));
  if (glimpse_h > 4 * H || glimpse_w > 4 * W) {
    throw std::invalid_argument("extract_glimpse: glimpse " + std::to_string(glimpse_h) + "x" +
                                std::to_string(glimpse_w) + " larger than 4x image " +
                                shape_str(image.shape()));
  }

  Tensor ay = build_attention_matrix(att, Axis::kY, H, glimpse_h, poly);
  Tensor ax_t = transpose(build_attention_matrix(att, Axis::kX, W, glimpse_w, poly));

  std::vector<Tensor> channels;
  channels.reserve(C);
  for (std::size_t c = 0; c < C; ++c) {
    Tensor xc = reshape(slice(image, {0, 0, c}, {H, W, c + 1}), {H, W});
    Tensor g = matmul(matmul(ay, xc), ax_t);
    channels.push_back(reshape(g, {glimpse_h, glimpse_w, 1}));
  }
  return C == 1 ? channels[0] : concat(channels, 2);
}

Tensor attention_box_tensor(const Tensor& att) {
  if (att.size() != 4) {
    throw std::invalid_argument("attention_box_tensor: expected 4 values, got " +
                                shape_str(att.shape()));
  }
  Tensor centers = slice(att, {0}, {2});
  Tensor spans = slice(att, {2}, {4});
  Tensor xy = sub(centers, scale(spans, 0.5));
  return concat({xy, spans}, 0);
}

}  // namespace hart
