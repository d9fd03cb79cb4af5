#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hart/appearance.hpp"
#include "hart/attention.hpp"
#include "hart/box.hpp"
#include "hart/params.hpp"
#include "hart/tensor.hpp"

namespace hart {

enum class LossMode { kSpatialAttOnly, kAppAttNoLoss, kFullHart };

LossMode loss_mode_from_string(const std::string& s);
std::string to_string(LossMode m);

struct ModelConfig {
  std::size_t glimpse_h = 28;
  std::size_t glimpse_w = 28;
  std::size_t channels = 3;
  V1Preset v1_preset = V1Preset::kSmall;
  std::size_t lstm_units = 100;
  std::size_t app_dim = 64;
  std::size_t feature_dim = 256;
  std::size_t fuse_hidden = 256;
  std::size_t gen_hidden = 64;
  std::size_t decoder_hidden = 256;
  double dropout = 0.25;
  double zoneout = 0.05;
  SigmaPolynomial sigma;
  std::uint64_t init_seed = 1;
};

// Per-call execution context. Training mode samples dropout and Zoneout
// masks from the provided stream; eval mode is deterministic. In
// kSpatialAttOnly the location map is detached everywhere it is consumed,
// so no gradient can reach the dorsal stream.
struct RunContext {
  bool training = false;
  Rng* rng = nullptr;
  LossMode mode = LossMode::kFullHart;
};

// Markovian tracker state h_t: LSTM memory, current attention a_t (4-tensor
// cx, cy, sx, sy) and current appearance app_t. The attention update scale c
// lives with the model parameters.
struct TrackerState {
  Tensor lstm_h;
  Tensor lstm_c;
  Tensor attention;
  Tensor appearance;
};

struct StepOutput {
  std::size_t t = 0;               // frame index, 2-based for step outputs
  Tensor bbox;                     // [x, y, w, h], on tape
  BoundingBox bbox_value;          // same, as plain numbers
  Tensor attention_used;           // a_t the glimpse was extracted with
  Tensor attention_next;           // a_{t+1}
  Tensor attention_delta;          // raw da before the tanh(c) scaling
  Tensor appearance_next;
  Tensor location_map;             // s_t, [h_v, w_v]
  Tensor glimpse;                  // [gh, gw, C]
  Tensor filter_bank_flat;         // Psi_t as one vector
};

struct Trajectory {
  Tensor init_attention;           // a_1 after the learnable bias
  Tensor init_appearance;          // app_1
  Tensor init_filter_bank_flat;    // Psi from the init pass
  std::vector<StepOutput> steps;   // t = 2..T
};

class HartModel {
 public:
  explicit HartModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const AppearanceAttention& appearance() const { return appearance_; }
  std::size_t map_h() const { return appearance_.config().v1.out_h; }
  std::size_t map_w() const { return appearance_.config().v1.out_w; }

  TrackerState init_state(const Tensor& frame, const BoundingBox& b1,
                          const RunContext& ctx) const;
  // Extracts a glimpse at state.attention, runs appearance attention and the
  // LSTM, and decodes app_{t+1}, the attention update and the bbox
  // correction. `t` only labels errors and outputs.
  std::pair<TrackerState, StepOutput> step(const TrackerState& state, const Tensor& frame,
                                           const RunContext& ctx, std::size_t t = 2) const;
  // init on frames[0], step on frames[1..]; outputs for t = 2..T.
  Trajectory track_sequence(const std::vector<Tensor>& frames, const BoundingBox& b1,
                            const RunContext& ctx) const;

  ParamList parameters() const;  // stable registration order
  void copy_values_from(const HartModel& other);
  void load_values(const ParamList& entries);  // by name; missing name -> error

  void save(const std::string& path) const;                 // checkpoint with meta
  static HartModel load_from_checkpoint(const std::string& path);

  const Tensor& attention_bias() const { return attention_bias_; }
  const Tensor& update_scale() const { return update_scale_; }

 private:
  std::pair<TrackerState, StepOutput> step_impl(const TrackerState& state, const Tensor& frame,
                                                const RunContext& ctx, std::size_t t) const;
  Tensor clamp_attention(const Tensor& att, std::size_t frame_h, std::size_t frame_w) const;
  Tensor lstm_forward(const Tensor& x, Tensor& h, Tensor& c, const RunContext& ctx) const;

  ModelConfig cfg_;
  Rng init_rng_;  // parameter initialization stream; ordered before appearance_
  AppearanceAttention appearance_;
  Tensor attention_bias_;   // added to box-derived attention at init
  Tensor update_scale_;     // c in a_{t+1} = a_t + tanh(c) * da
  Tensor app_init_w_, app_init_b_;      // mean-pooled V1 features -> app_1
  Tensor state_init_w_, state_init_b_;  // v_1 -> (h_1, c_1)
  Tensor lstm_w_, lstm_b_;
  Tensor dec_w1_, dec_b1_, dec_w2_, dec_b2_;
};

}  // namespace hart
