#pragma once

#include <cstdint>
#include <string>

#include "hart/synth.hpp"
#include "hart/tracker.hpp"

namespace hart {

// Training configuration, read from plain-text `key = value` files. Keys map
// 1:1 to the fields below; unknown keys are errors. '#' starts a comment.
struct TrainConfig {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double rmsprop_decay = 0.9;
  std::size_t batch_size = 8;
  std::size_t curriculum_start = 5;
  std::size_t curriculum_increment = 5;
  std::string curriculum_schedule = "linear";  // or "double"
  std::size_t epochs_per_stage = 13;
  std::size_t max_seq_len = 20;
  std::size_t base_steps_per_epoch = 50;
  std::string loss_mode = "full_hart";
  double beta = 1e-4;
  double epsilon = 1e-4;
  std::uint64_t seed = 1;
  std::size_t glimpse_h = 28;
  std::size_t glimpse_w = 28;
  std::string v1_preset = "small";
  double zoneout = 0.05;
  double dropout = 0.25;
  std::size_t lstm_units = 100;
  double grad_clip_norm = 5.0;
  double lr_stage_decay = 1.0;  // learning-rate multiplier applied per curriculum stage
  std::size_t threads = 0;  // 0 = hardware concurrency, capped at batch size
  std::string sigma_file;   // optional 5-line coefficients file

  void validate() const;
  LossMode mode() const { return loss_mode_from_string(loss_mode); }
  V1Preset preset() const { return v1_preset_from_string(v1_preset); }
};

TrainConfig parse_train_config(const std::string& path);
TrainConfig parse_train_config_text(const std::string& text, const std::string& origin);
void write_train_config(const TrainConfig& cfg, const std::string& path);

// Scene configuration files use the same format with keys image_h, image_w,
// sprite_min, sprite_max, distractors, vel_min, vel_max, occluder_prob,
// drift_rate, background, length.
SceneConfig parse_scene_config(const std::string& path);
SceneConfig parse_scene_config_text(const std::string& text, const std::string& origin);

}  // namespace hart
