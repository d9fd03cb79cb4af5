#include "hart/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "hart/ops.hpp"

namespace hart {

namespace {

Tensor comp(const Tensor& box, std::size_t i) { return slice(box, {i}, {i + 1}); }

// positive part of the 1-D overlap [max(lo), min(hi)]
Tensor overlap_1d(const Tensor& alo, const Tensor& ahi, const Tensor& blo, const Tensor& bhi) {
  return relu(sub(minimum(ahi, bhi), maximum(alo, blo)));
}

Tensor intersection_tensor(const Tensor& a, const Tensor& b) {
  Tensor ax = comp(a, 0), ay = comp(a, 1), aw = comp(a, 2), ah = comp(a, 3);
  Tensor bx = comp(b, 0), by = comp(b, 1), bw = comp(b, 2), bh = comp(b, 3);
  Tensor iw = overlap_1d(ax, add(ax, aw), bx, add(bx, bw));
  Tensor ih = overlap_1d(ay, add(ay, ah), by, add(by, bh));
  return mul(iw, ih);
}

Tensor mean_of(const std::vector<Tensor>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("loss: empty sequence");
  if (scalars.size() == 1) return scalars[0];
  return mean(concat(scalars, 0));
}

}  // namespace

Tensor box_constant(const BoundingBox& b) {
  return Tensor::from({4}, {b.x, b.y, b.w, b.h});
}

Tensor iou_tensor(const Tensor& a, const Tensor& b) {
  if (a.size() != 4 || b.size() != 4) {
    throw std::invalid_argument("iou_tensor: boxes must have 4 values, got " +
                                shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  Tensor inter = intersection_tensor(a, b);
  Tensor area_a = mul(comp(a, 2), comp(a, 3));
  Tensor area_b = mul(comp(b, 2), comp(b, 3));
  Tensor uni = sub(add(area_a, area_b), inter);
  return div(inter, uni);
}

Tensor tracking_loss(const std::vector<Tensor>& pred_boxes, const std::vector<BoundingBox>& truth,
                     double eps) {
  if (pred_boxes.size() != truth.size()) {
    throw std::invalid_argument("tracking_loss: " + std::to_string(pred_boxes.size()) +
                                " predictions vs " + std::to_string(truth.size()) + " truth boxes");
  }
  std::vector<Tensor> terms;
  terms.reserve(pred_boxes.size());
  for (std::size_t i = 0; i < pred_boxes.size(); ++i) {
    Tensor iou = iou_tensor(pred_boxes[i], box_constant(truth[i]));
    terms.push_back(neg(log_op(clip(iou, eps, 1.0))));
  }
  return mean_of(terms);
}

Tensor spatial_attention_loss(const std::vector<Tensor>& att_boxes,
                              const std::vector<BoundingBox>& truth, const BoundingBox& image_box,
                              double eps) {
  if (att_boxes.size() != truth.size()) {
    throw std::invalid_argument("spatial_attention_loss: " + std::to_string(att_boxes.size()) +
                                " attentions vs " + std::to_string(truth.size()) + " truth boxes");
  }
  Tensor image = box_constant(image_box);
  std::vector<Tensor> terms;
  terms.reserve(att_boxes.size());
  for (std::size_t i = 0; i < att_boxes.size(); ++i) {
    Tensor truth_t = box_constant(truth[i]);
    Tensor cover = scale(intersection_tensor(att_boxes[i], truth_t), 1.0 / truth[i].area());
    Tensor too_big = sub(Tensor::scalar(1.0), iou_tensor(att_boxes[i], image));
    Tensor term1 = neg(log_op(clip(cover, eps, 1.0 - eps)));
    Tensor term2 = neg(log_op(clip(too_big, eps, 1.0 - eps)));
    terms.push_back(reshape(add(term1, term2), {1}));
  }
  return mean_of(terms);
}

Tensor target_mask(const AttentionParams& att, const BoundingBox& b, std::size_t map_h,
                   std::size_t map_w) {
  const BoundingBox window = attention_to_box(att);
  Tensor mask = Tensor::zeros({map_h, map_w});
  for (std::size_t r = 0; r < map_h; ++r) {
    const double cy = window.y + (static_cast<double>(r) + 0.5) * window.h / static_cast<double>(map_h);
    for (std::size_t c = 0; c < map_w; ++c) {
      const double cx =
          window.x + (static_cast<double>(c) + 0.5) * window.w / static_cast<double>(map_w);
      const bool inside = cx >= b.x && cx < b.x + b.w && cy >= b.y && cy < b.y + b.h;
      mask.at(r, c) = inside ? 1.0 : 0.0;
    }
  }
  return mask;
}

Tensor appearance_loss(const std::vector<Tensor>& location_maps, const std::vector<Tensor>& masks,
                       double eps) {
  if (location_maps.size() != masks.size()) {
    throw std::invalid_argument("appearance_loss: " + std::to_string(location_maps.size()) +
                                " maps vs " + std::to_string(masks.size()) + " masks");
  }
  std::vector<Tensor> terms;
  terms.reserve(location_maps.size());
  for (std::size_t i = 0; i < location_maps.size(); ++i) {
    const Tensor& m = masks[i];
    if (m.shape() != location_maps[i].shape())
      throw std::invalid_argument("appearance_loss: map " + shape_str(location_maps[i].shape()) +
                                  " vs mask " + shape_str(m.shape()));
    Tensor s = clip(location_maps[i], eps, 1.0 - eps);
    Tensor ones = Tensor::full(m.shape(), 1.0);
    Tensor bce = neg(add(mul(m, log_op(s)), mul(sub(ones, m), log_op(sub(ones, s)))));
    terms.push_back(mean(bce));
  }
  return mean_of(terms);
}

Tensor l2_regularizer(const std::vector<Tensor>& params, const std::vector<Tensor>& banks_flat) {
  Tensor acc = Tensor::scalar(0.0);
  for (const Tensor& p : params) acc = add(acc, sum(mul(p, p)));
  if (!banks_flat.empty()) {
    Tensor bank_sum = banks_flat[0];
    for (std::size_t i = 1; i < banks_flat.size(); ++i) bank_sum = add(bank_sum, banks_flat[i]);
    Tensor bank_mean = scale(bank_sum, 1.0 / static_cast<double>(banks_flat.size()));
    acc = add(acc, sum(mul(bank_mean, bank_mean)));
  }
  return scale(acc, 0.5);
}

Tensor adaptive_regularizer(const AdaptiveWeights& weights, std::size_t active_count) {
  if (active_count == 0 || active_count > 3)
    throw std::invalid_argument("adaptive_regularizer: active_count must be in [1, 3]");
  return neg(sum(slice(weights.eta, {0}, {active_count})));
}

std::size_t active_lambda_count(LossMode mode) {
  return mode == LossMode::kFullHart ? 3 : 2;
}

std::vector<Tensor> regularized_params(const ParamList& params, LossMode mode) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const NamedParam& p : params) {
    if (mode == LossMode::kSpatialAttOnly && AppearanceAttention::is_dorsal_param(p.name)) continue;
    out.push_back(p.value);
  }
  return out;
}

SequenceTerms sequence_loss_terms(const Trajectory& traj, const std::vector<BoundingBox>& truth,
                                  const BoundingBox& image_box, std::size_t map_h,
                                  std::size_t map_w, const LossConfig& cfg) {
  if (truth.size() != traj.steps.size() + 1) {
    throw std::invalid_argument("sequence_loss_terms: trajectory of " +
                                std::to_string(traj.steps.size()) + " steps needs " +
                                std::to_string(traj.steps.size() + 1) + " truth boxes, got " +
                                std::to_string(truth.size()));
  }
  SequenceTerms terms;
  terms.steps = traj.steps.size();

  std::vector<Tensor> pred_boxes, att_boxes, maps, masks;
  std::vector<BoundingBox> truth_steps(truth.begin() + 1, truth.end());
  double iou_acc = 0.0;
  for (std::size_t k = 0; k < traj.steps.size(); ++k) {
    const StepOutput& so = traj.steps[k];
    pred_boxes.push_back(so.bbox);
    att_boxes.push_back(attention_box_tensor(so.attention_used));
    iou_acc += iou(so.bbox_value, truth_steps[k]);
    if (cfg.mode == LossMode::kFullHart) {
      maps.push_back(so.location_map);
      masks.push_back(target_mask(AttentionParams::from_tensor(so.attention_used), truth_steps[k],
                                  map_h, map_w));
    }
  }
  terms.mean_iou = iou_acc / static_cast<double>(traj.steps.size());
  terms.l_track = tracking_loss(pred_boxes, truth_steps, cfg.epsilon);
  terms.l_spatial = spatial_attention_loss(att_boxes, truth_steps, image_box, cfg.epsilon);
  if (cfg.mode == LossMode::kFullHart) terms.l_app = appearance_loss(maps, masks, cfg.epsilon);

  if (cfg.mode != LossMode::kSpatialAttOnly) {
    terms.banks_flat.push_back(traj.init_filter_bank_flat);
    for (const StepOutput& so : traj.steps) terms.banks_flat.push_back(so.filter_bank_flat);
  }
  return terms;
}

namespace {

LossBreakdown assemble(const std::vector<SequenceTerms>& all, const ParamList& params,
                       const LossConfig& cfg, const AdaptiveWeights& weights) {
  const std::size_t M = all.size();
  std::vector<Tensor> track_terms, spatial_terms, app_terms;
  std::vector<Tensor> banks;
  double iou_acc = 0.0;
  for (const SequenceTerms& t : all) {
    track_terms.push_back(t.l_track);
    spatial_terms.push_back(t.l_spatial);
    if (t.l_app.defined()) app_terms.push_back(t.l_app);
    banks.insert(banks.end(), t.banks_flat.begin(), t.banks_flat.end());
    iou_acc += t.mean_iou;
  }
  Tensor l_track = mean_of(track_terms);
  Tensor l_spatial = mean_of(spatial_terms);

  Tensor total = add(mul(weights.lambda(0), l_track), mul(weights.lambda(1), l_spatial));
  LossBreakdown out;
  if (cfg.mode == LossMode::kFullHart) {
    Tensor l_app = mean_of(app_terms);
    total = add(total, mul(weights.lambda(2), l_app));
    out.l_appearance = l_app.item();
  }
  Tensor r_lambda = adaptive_regularizer(weights, active_lambda_count(cfg.mode));
  Tensor r_l2 = l2_regularizer(regularized_params(params, cfg.mode), banks);
  total = add(add(total, r_lambda), scale(r_l2, cfg.beta));

  out.l_track = l_track.item();
  out.l_spatial = l_spatial.item();
  out.r_lambda = r_lambda.item();
  out.r_l2 = r_l2.item();
  out.lambda_t = weights.lambda_value(0);
  out.lambda_s = weights.lambda_value(1);
  out.lambda_a = weights.lambda_value(2);
  out.mean_iou = iou_acc / static_cast<double>(M);
  out.total = total.item();
  out.total_tensor = total;
  return out;
}

}  // namespace

LossBreakdown total_loss(const Trajectory& traj, const std::vector<BoundingBox>& truth,
                         const BoundingBox& image_box, std::size_t map_h, std::size_t map_w,
                         const ParamList& params, const LossConfig& cfg,
                         const AdaptiveWeights& weights) {
  std::vector<SequenceTerms> all;
  all.push_back(sequence_loss_terms(traj, truth, image_box, map_h, map_w, cfg));
  return assemble(all, params, cfg, weights);
}

LossBreakdown batch_total_loss(const std::vector<Trajectory>& trajs,
                               const std::vector<std::vector<BoundingBox>>& truths,
                               const BoundingBox& image_box, std::size_t map_h, std::size_t map_w,
                               const ParamList& params, const LossConfig& cfg,
                               const AdaptiveWeights& weights) {
  if (trajs.size() != truths.size() || trajs.empty())
    throw std::invalid_argument("batch_total_loss: batch size mismatch or empty batch");
  std::vector<SequenceTerms> all;
  all.reserve(trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i)
    all.push_back(sequence_loss_terms(trajs[i], truths[i], image_box, map_h, map_w, cfg));
  return assemble(all, params, cfg, weights);
}

}  // namespace hart
