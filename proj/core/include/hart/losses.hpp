#pragma once

#include <vector>

#include "hart/attention.hpp"
#include "hart/box.hpp"
#include "hart/params.hpp"
#include "hart/tensor.hpp"
#include "hart/tracker.hpp"

namespace hart {

struct LossConfig {
  double epsilon = 1e-4;  // clip for every log argument
  double beta = 1e-4;     // L2 regularization weight
  LossMode mode = LossMode::kFullHart;
};

// Positive loss weights, lambda = exp(eta), eta learnable and 0 at init.
// Order: (tracking, spatial, appearance).
struct AdaptiveWeights {
  Tensor eta = Tensor::zeros({3}, true);

  double lambda_value(std::size_t i) const { return std::exp(eta.at(i)); }
  Tensor lambda(std::size_t i) const { return exp_op(slice(eta, {i}, {i + 1})); }
};

struct LossBreakdown {
  double l_track = 0.0;
  double l_spatial = 0.0;
  double l_appearance = 0.0;
  double r_lambda = 0.0;
  double r_l2 = 0.0;
  double total = 0.0;
  double lambda_t = 1.0, lambda_s = 1.0, lambda_a = 1.0;
  double mean_iou = 0.0;
  Tensor total_tensor;  // scalar, on tape
};

// Differentiable IoU of two (x, y, w, h) box tensors. Degenerate overlap is
// hinged at zero (zero gradient once the boxes separate).
Tensor iou_tensor(const Tensor& a, const Tensor& b);

Tensor box_constant(const BoundingBox& b);

// mean over t of -log(clip(IoU, eps, 1))
Tensor tracking_loss(const std::vector<Tensor>& pred_boxes,
                     const std::vector<BoundingBox>& truth, double eps);

// mean over t of -log(clip(inter(att, b)/area(b), eps, 1-eps))
//              - log(clip(1 - IoU(att, image), eps, 1-eps))
Tensor spatial_attention_loss(const std::vector<Tensor>& att_boxes,
                              const std::vector<BoundingBox>& truth, const BoundingBox& image_box,
                              double eps);

// Binary mask over the V1 grid: cell = 1 iff its center, placed on a uniform
// grid over the attention box, falls inside the ground-truth box. Constant
// (excluded from the tape).
Tensor target_mask(const AttentionParams& att, const BoundingBox& b, std::size_t map_h,
                   std::size_t map_w);

// mean over timesteps and cells of the binary cross-entropy between mask and
// clip(s, eps, 1-eps)
Tensor appearance_loss(const std::vector<Tensor>& location_maps,
                       const std::vector<Tensor>& masks, double eps);

// 0.5 * ||theta||^2 + 0.5 * ||mean(banks)||^2; the mean over the provided
// dynamic filter banks is taken before the norm.
Tensor l2_regularizer(const std::vector<Tensor>& params, const std::vector<Tensor>& banks_flat);

// R(lambda) = -sum_i log(lambda_i) over the active weights; equals -sum eta.
// Minimizing lambda*L - log(lambda) drives lambda -> 1/L.
Tensor adaptive_regularizer(const AdaptiveWeights& weights, std::size_t active_count = 3);

// Per-sequence terms, each a scalar tensor (means over t = 2..T).
struct SequenceTerms {
  Tensor l_track;
  Tensor l_spatial;
  Tensor l_app;                    // undefined tensor when the mode excludes it
  std::vector<Tensor> banks_flat;  // Psi from init + every step
  double mean_iou = 0.0;
  std::size_t steps = 0;
};

SequenceTerms sequence_loss_terms(const Trajectory& traj, const std::vector<BoundingBox>& truth,
                                  const BoundingBox& image_box, std::size_t map_h,
                                  std::size_t map_w, const LossConfig& cfg);

// Full single-sequence assembly:
//   total = l_t*L_t + l_s*L_s [+ l_a*L_a] + R(lambda) + beta * R_l2
// In kSpatialAttOnly the appearance term is dropped, lambda_a stays frozen,
// and the dorsal stream is excluded from regularization (it is not trained).
// In kAppAttNoLoss only the appearance loss term is dropped.
LossBreakdown total_loss(const Trajectory& traj, const std::vector<BoundingBox>& truth,
                         const BoundingBox& image_box, std::size_t map_h, std::size_t map_w,
                         const ParamList& params, const LossConfig& cfg,
                         const AdaptiveWeights& weights);

// One-tape reference for a minibatch: sequence terms are averaged across
// sequences, regularizers enter once.
LossBreakdown batch_total_loss(const std::vector<Trajectory>& trajs,
                               const std::vector<std::vector<BoundingBox>>& truths,
                               const BoundingBox& image_box, std::size_t map_h, std::size_t map_w,
                               const ParamList& params, const LossConfig& cfg,
                               const AdaptiveWeights& weights);

// theta for the L2 term under the given mode (drops dorsal params in
// kSpatialAttOnly); adaptive weights are never part of theta.
std::vector<Tensor> regularized_params(const ParamList& params, LossMode mode);

std::size_t active_lambda_count(LossMode mode);

}  // namespace hart
