#include "hart/tracker.hpp"

#include <cmath>
#include <stdexcept>

#include "hart/checkpoint.hpp"

namespace hart {

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "spatial_att_only") return LossMode::kSpatialAttOnly;
  if (s == "app_att_no_loss") return LossMode::kAppAttNoLoss;
  if (s == "full_hart") return LossMode::kFullHart;
  throw std::invalid_argument("unknown loss_mode '" + s +
                              "' (expected spatial_att_only, app_att_no_loss or full_hart)");
}

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::kSpatialAttOnly: return "spatial_att_only";
    case LossMode::kAppAttNoLoss: return "app_att_no_loss";
    default: return "full_hart";
  }
}

void fill_orthogonal(double* block, std::size_t n, Rng& rng) {
  // modified Gram-Schmidt on a random normal matrix, rows become orthonormal
  for (std::size_t i = 0; i < n * n; ++i) block[i] = rng.normal();
  for (std::size_t r = 0; r < n; ++r) {
    double* row = block + r * n;
    for (std::size_t p = 0; p < r; ++p) {
      const double* prev = block + p * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += row[j] * prev[j];
      for (std::size_t j = 0; j < n; ++j) row[j] -= dot * prev[j];
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) norm += row[j] * row[j];
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      for (std::size_t j = 0; j < n; ++j) row[j] = rng.normal();
      norm = 0.0;
      for (std::size_t j = 0; j < n; ++j) norm += row[j] * row[j];
      norm = std::sqrt(norm);
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= norm;
  }
}

namespace {

AppearanceConfig make_appearance_config(const ModelConfig& cfg) {
  AppearanceConfig ac;
  ac.v1 = V1Config::make(cfg.v1_preset, cfg.glimpse_h, cfg.glimpse_w, cfg.channels, cfg.dropout);
  ac.app_dim = cfg.app_dim;
  ac.gen_hidden = cfg.gen_hidden;
  ac.fuse_hidden = cfg.fuse_hidden;
  ac.feature_dim = cfg.feature_dim;
  return ac;
}

Tensor linear_param(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  init_glorot(t, rng, t.dim(1), t.dim(0));
  return t;
}

void check_finite(const Tensor& t, const char* what, std::size_t timestep) {
  if (!all_finite(t)) {
    throw std::runtime_error(std::string("tracker: non-finite ") + what + " at timestep " +
                             std::to_string(timestep));
  }
}

}  // namespace

HartModel::HartModel(ModelConfig cfg)
    : cfg_(cfg), init_rng_(cfg.init_seed), appearance_(make_appearance_config(cfg_), init_rng_) {
  const std::size_t H = cfg_.lstm_units;
  const std::size_t F = cfg_.feature_dim;
  const std::size_t A = cfg_.app_dim;
  const std::size_t map_cells = map_h() * map_w();

  attention_bias_ = Tensor::zeros({4}, true);
  update_scale_ = Tensor::full({4}, 0.01, true);

  app_init_w_ = linear_param({A, appearance_.config().v1.out_c}, init_rng_);
  app_init_b_ = Tensor::zeros({A}, true);
  state_init_w_ = linear_param({2 * H, F}, init_rng_);
  state_init_b_ = Tensor::zeros({2 * H}, true);

  // LSTM input block Glorot, recurrent block orthogonal per gate, forget
  // gate bias 1.
  lstm_w_ = Tensor::zeros({4 * H, F + H}, true);
  {
    const double bound = std::sqrt(6.0 / static_cast<double>(F + H + 4 * H));
    for (std::size_t r = 0; r < 4 * H; ++r)
      for (std::size_t c = 0; c < F; ++c) lstm_w_.at(r, c) = init_rng_.uniform(-bound, bound);
    std::vector<double> block(H * H);
    for (std::size_t gate = 0; gate < 4; ++gate) {
      fill_orthogonal(block.data(), H, init_rng_);
      for (std::size_t r = 0; r < H; ++r)
        for (std::size_t c = 0; c < H; ++c) lstm_w_.at(gate * H + r, F + c) = block[r * H + c];
    }
  }
  lstm_b_ = Tensor::zeros({4 * H}, true);
  for (std::size_t i = H; i < 2 * H; ++i) lstm_b_.at(i) = 1.0;  // forget gate

  const std::size_t dec_in = H + map_cells;
  const std::size_t dec_out = A + 4 + 4;
  dec_w1_ = linear_param({cfg_.decoder_hidden, dec_in}, init_rng_);
  dec_b1_ = Tensor::zeros({cfg_.decoder_hidden}, true);
  dec_w2_ = linear_param({dec_out, cfg_.decoder_hidden}, init_rng_);
  // keep early updates small, like the 0.1-scaled dynamic filter generator
  for (double& v : dec_w2_.values()) v *= 0.1;
  dec_b2_ = Tensor::zeros({dec_out}, true);
}

Tensor HartModel::clamp_attention(const Tensor& att, std::size_t frame_h,
                                  std::size_t frame_w) const {
  Tensor centers = slice(att, {0}, {2});
  Tensor sx = clip(slice(att, {2}, {3}), 1.0, 2.0 * static_cast<double>(frame_w));
  Tensor sy = clip(slice(att, {3}, {4}), 1.0, 2.0 * static_cast<double>(frame_h));
  return concat({centers, sx, sy}, 0);
}

Tensor HartModel::lstm_forward(const Tensor& x, Tensor& h, Tensor& c,
                               const RunContext& ctx) const {
  const std::size_t H = cfg_.lstm_units;
  Tensor z = add(matmul(lstm_w_, concat({x, h}, 0)), lstm_b_);
  Tensor i_gate = sigmoid(slice(z, {0}, {H}));
  Tensor f_gate = sigmoid(slice(z, {H}, {2 * H}));
  Tensor g_cell = tanh_op(slice(z, {2 * H}, {3 * H}));
  Tensor o_gate = sigmoid(slice(z, {3 * H}, {4 * H}));
  Tensor c_new = add(mul(f_gate, c), mul(i_gate, g_cell));
  Tensor h_new = mul(o_gate, tanh_op(c_new));

  const double p = cfg_.zoneout;
  if (p > 0.0) {
    if (ctx.training) {
      if (!ctx.rng) throw std::invalid_argument("lstm_forward: training mode needs an RNG");
      Tensor mask_c = Tensor::zeros({H});
      Tensor mask_h = Tensor::zeros({H});
      for (std::size_t i = 0; i < H; ++i) mask_c.at(i) = ctx.rng->bernoulli(p) ? 1.0 : 0.0;
      for (std::size_t i = 0; i < H; ++i) mask_h.at(i) = ctx.rng->bernoulli(p) ? 1.0 : 0.0;
      Tensor inv_c = Tensor::zeros({H});
      Tensor inv_h = Tensor::zeros({H});
      for (std::size_t i = 0; i < H; ++i) inv_c.at(i) = 1.0 - mask_c.at(i);
      for (std::size_t i = 0; i < H; ++i) inv_h.at(i) = 1.0 - mask_h.at(i);
      c_new = add(mul(mask_c, c), mul(inv_c, c_new));
      h_new = add(mul(mask_h, h), mul(inv_h, h_new));
    } else {
      // deterministic expectation of the Zoneout update
      c_new = add(scale(c, p), scale(c_new, 1.0 - p));
      h_new = add(scale(h, p), scale(h_new, 1.0 - p));
    }
  }
  c = c_new;
  h = h_new;
  return h_new;
}

TrackerState HartModel::init_state(const Tensor& frame, const BoundingBox& b1,
                                   const RunContext& ctx) const {
  if (frame.rank() != 3) {
    throw std::invalid_argument("init_state: frame must be [H,W,C], got " +
                                shape_str(frame.shape()));
  }
  if (!b1.finite() || b1.w <= 0.0 || b1.h <= 0.0) {
    throw std::invalid_argument("init_state: invalid initial box " + b1.str());
  }
  const std::size_t FH = frame.dim(0), FW = frame.dim(1);

  Tensor att_box = box_to_attention(b1).to_tensor();
  Tensor att = clamp_attention(add(att_box, attention_bias_), FH, FW);

  Tensor glimpse = extract_glimpse(frame, att, cfg_.glimpse_h, cfg_.glimpse_w, cfg_.sigma);
  Tensor feats = appearance_.v1_forward(glimpse, ctx.training, ctx.rng);

  const std::size_t cells = map_h() * map_w();
  Tensor pooled = scale(sum_axis(sum_axis(feats, 0, false), 0, false),
                        1.0 / static_cast<double>(cells));
  Tensor app = tanh_op(add(matmul(app_init_w_, pooled), app_init_b_));

  Tensor ventral = appearance_.ventral_forward(feats);
  FilterBank bank = appearance_.dorsal_filters(app);
  Tensor smap = appearance_.dorsal_forward(feats, bank);
  Tensor mask = ctx.mode == LossMode::kSpatialAttOnly ? detach(smap) : smap;
  Tensor v = appearance_.fuse(ventral, mask);

  Tensor hc = tanh_op(add(matmul(state_init_w_, v), state_init_b_));
  TrackerState state;
  state.lstm_h = slice(hc, {0}, {cfg_.lstm_units});
  state.lstm_c = slice(hc, {cfg_.lstm_units}, {2 * cfg_.lstm_units});
  state.attention = att;
  state.appearance = app;
  check_finite(state.attention, "initial attention", 1);
  return state;
}

std::pair<TrackerState, StepOutput> HartModel::step(const TrackerState& state, const Tensor& frame,
                                                    const RunContext& ctx, std::size_t t) const {
  try {
    return step_impl(state, frame, ctx, t);
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    if (what.find("timestep") != std::string::npos) throw;
    throw std::runtime_error(what + " (timestep " + std::to_string(t) + ")");
  }
}

std::pair<TrackerState, StepOutput> HartModel::step_impl(const TrackerState& state,
                                                         const Tensor& frame,
                                                         const RunContext& ctx,
                                                         std::size_t t) const {
  if (frame.rank() != 3) {
    throw std::invalid_argument("step: frame must be [H,W,C], got " + shape_str(frame.shape()));
  }
  const std::size_t FH = frame.dim(0), FW = frame.dim(1);
  const std::size_t A = cfg_.app_dim;

  Tensor glimpse = extract_glimpse(frame, state.attention, cfg_.glimpse_h, cfg_.glimpse_w,
                                   cfg_.sigma);
  Tensor feats = appearance_.v1_forward(glimpse, ctx.training, ctx.rng);
  Tensor ventral = appearance_.ventral_forward(feats);
  FilterBank bank = appearance_.dorsal_filters(state.appearance);
  Tensor smap = appearance_.dorsal_forward(feats, bank);
  Tensor mask = ctx.mode == LossMode::kSpatialAttOnly ? detach(smap) : smap;
  Tensor v = appearance_.fuse(ventral, mask);

  TrackerState next = state;
  Tensor out = lstm_forward(v, next.lstm_h, next.lstm_c, ctx);

  Tensor smap_flat = reshape(mask, {map_h() * map_w()});
  Tensor dec_in = concat({out, smap_flat}, 0);
  Tensor dec = add(matmul(dec_w2_, tanh_op(add(matmul(dec_w1_, dec_in), dec_b1_))), dec_b2_);

  Tensor app_next = slice(dec, {0}, {A});
  Tensor d_att = slice(dec, {A}, {A + 4});
  Tensor d_box = slice(dec, {A + 4}, {A + 8});

  // a_{t+1} = a_t + tanh(c) . da, spans clamped to [1, 2 * frame dim]
  Tensor att_next = clamp_attention(add(state.attention, mul(tanh_op(update_scale_), d_att)),
                                    FH, FW);
  // b_t = a_t + db in (center, span) coordinates, then converted to a box
  Tensor bbox_att = add(state.attention, d_box);
  Tensor bbox_centers = slice(bbox_att, {0}, {2});
  Tensor bbox_spans = clip(slice(bbox_att, {2}, {4}), 1.0, 1e300);
  Tensor bbox = concat({sub(bbox_centers, scale(bbox_spans, 0.5)), bbox_spans}, 0);

  check_finite(bbox, "bbox estimate", t);
  check_finite(att_next, "attention update", t);

  next.attention = att_next;
  next.appearance = app_next;

  StepOutput so;
  so.t = t;
  so.bbox = bbox;
  so.bbox_value = {bbox.at(0), bbox.at(1), bbox.at(2), bbox.at(3)};
  so.attention_used = state.attention;
  so.attention_next = att_next;
  so.attention_delta = d_att;
  so.appearance_next = app_next;
  so.location_map = smap;
  so.glimpse = glimpse;
  so.filter_bank_flat = bank.flat;
  return {next, so};
}

Trajectory HartModel::track_sequence(const std::vector<Tensor>& frames, const BoundingBox& b1,
                                     const RunContext& ctx) const {
  if (frames.size() < 2) {
    throw std::invalid_argument("track_sequence: need at least 2 frames, got " +
                                std::to_string(frames.size()));
  }
  Trajectory traj;
  TrackerState state = init_state(frames[0], b1, ctx);
  traj.init_attention = state.attention;
  traj.init_appearance = state.appearance;
  {
    // the init pass also generates a filter bank; recompute its flat view
    FilterBank bank = appearance_.dorsal_filters(state.appearance);
    traj.init_filter_bank_flat = bank.flat;
  }
  traj.steps.reserve(frames.size() - 1);
  for (std::size_t i = 1; i < frames.size(); ++i) {
    auto [next, out] = step(state, frames[i], ctx, i + 1);
    traj.steps.push_back(std::move(out));
    state = std::move(next);
  }
  return traj;
}

ParamList HartModel::parameters() const {
  ParamList out;
  out.push_back({"tracker/attention_bias", attention_bias_});
  out.push_back({"tracker/update_scale", update_scale_});
  out.push_back({"tracker/app_init_w", app_init_w_});
  out.push_back({"tracker/app_init_b", app_init_b_});
  out.push_back({"tracker/state_init_w", state_init_w_});
  out.push_back({"tracker/state_init_b", state_init_b_});
  out.push_back({"tracker/lstm_w", lstm_w_});
  out.push_back({"tracker/lstm_b", lstm_b_});
  out.push_back({"tracker/dec_w1", dec_w1_});
  out.push_back({"tracker/dec_b1", dec_b1_});
  out.push_back({"tracker/dec_w2", dec_w2_});
  out.push_back({"tracker/dec_b2", dec_b2_});
  appearance_.collect(out, "appearance/");
  return out;
}

void HartModel::copy_values_from(const HartModel& other) {
  ParamList mine = parameters();
  ParamList theirs = other.parameters();
  if (mine.size() != theirs.size()) {
    throw std::runtime_error("copy_values_from: parameter count mismatch");
  }
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].name != theirs[i].name || mine[i].value.size() != theirs[i].value.size()) {
      throw std::runtime_error("copy_values_from: parameter layout mismatch at " + mine[i].name);
    }
    mine[i].value.values() = theirs[i].value.values();
  }
}

void HartModel::load_values(const ParamList& entries) {
  ParamList mine = parameters();
  for (NamedParam& p : mine) {
    const NamedParam* found = nullptr;
    for (const NamedParam& e : entries) {
      if (e.name == p.name) {
        found = &e;
        break;
      }
    }
    if (!found) throw std::runtime_error("load_values: checkpoint is missing parameter " + p.name);
    if (found->value.size() != p.value.size()) {
      throw std::runtime_error("load_values: shape mismatch for " + p.name + ": model " +
                               shape_str(p.value.shape()) + " vs checkpoint " +
                               shape_str(found->value.shape()));
    }
    p.value.values() = found->value.values();
  }
}

void HartModel::save(const std::string& path) const {
  ParamList entries = parameters();
  auto meta = [](double v) { return Tensor::scalar(v); };
  entries.push_back({"meta/glimpse_h", meta(static_cast<double>(cfg_.glimpse_h))});
  entries.push_back({"meta/glimpse_w", meta(static_cast<double>(cfg_.glimpse_w))});
  entries.push_back({"meta/channels", meta(static_cast<double>(cfg_.channels))});
  entries.push_back({"meta/v1_preset", meta(cfg_.v1_preset == V1Preset::kSmall ? 0.0 : 1.0)});
  entries.push_back({"meta/lstm_units", meta(static_cast<double>(cfg_.lstm_units))});
  entries.push_back({"meta/app_dim", meta(static_cast<double>(cfg_.app_dim))});
  entries.push_back({"meta/feature_dim", meta(static_cast<double>(cfg_.feature_dim))});
  entries.push_back({"meta/fuse_hidden", meta(static_cast<double>(cfg_.fuse_hidden))});
  entries.push_back({"meta/gen_hidden", meta(static_cast<double>(cfg_.gen_hidden))});
  entries.push_back({"meta/decoder_hidden", meta(static_cast<double>(cfg_.decoder_hidden))});
  entries.push_back({"meta/dropout", meta(cfg_.dropout)});
  entries.push_back({"meta/zoneout", meta(cfg_.zoneout)});
  Tensor sigma = Tensor::zeros({5});
  for (std::size_t i = 0; i < 5; ++i) sigma.at(i) = cfg_.sigma.coeffs[i];
  entries.push_back({"meta/sigma_coeffs", sigma});
  entries.push_back({"meta/sigma_min", meta(cfg_.sigma.sigma_min)});
  save_checkpoint(path, entries);
}

HartModel HartModel::load_from_checkpoint(const std::string& path) {
  ParamList entries = load_checkpoint(path);
  auto get = [&](const std::string& name) -> const Tensor& {
    for (const NamedParam& e : entries)
      if (e.name == name) return e.value;
    throw std::runtime_error("checkpoint " + path + " is missing entry " + name);
  };
  ModelConfig cfg;
  cfg.glimpse_h = static_cast<std::size_t>(get("meta/glimpse_h").item());
  cfg.glimpse_w = static_cast<std::size_t>(get("meta/glimpse_w").item());
  cfg.channels = static_cast<std::size_t>(get("meta/channels").item());
  cfg.v1_preset = get("meta/v1_preset").item() == 0.0 ? V1Preset::kSmall : V1Preset::kKittiLike;
  cfg.lstm_units = static_cast<std::size_t>(get("meta/lstm_units").item());
  cfg.app_dim = static_cast<std::size_t>(get("meta/app_dim").item());
  cfg.feature_dim = static_cast<std::size_t>(get("meta/feature_dim").item());
  cfg.fuse_hidden = static_cast<std::size_t>(get("meta/fuse_hidden").item());
  cfg.gen_hidden = static_cast<std::size_t>(get("meta/gen_hidden").item());
  cfg.decoder_hidden = static_cast<std::size_t>(get("meta/decoder_hidden").item());
  cfg.dropout = get("meta/dropout").item();
  cfg.zoneout = get("meta/zoneout").item();
  const Tensor& sigma = get("meta/sigma_coeffs");
  for (std::size_t i = 0; i < 5; ++i) cfg.sigma.coeffs[i] = sigma.at(i);
  cfg.sigma.sigma_min = get("meta/sigma_min").item();

  HartModel model(cfg);
  model.load_values(entries);
  return model;
}

}  // namespace hart
