#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hart/box.hpp"
#include "hart/image_io.hpp"
#include "hart/tensor.hpp"

namespace hart {

// Dataset-side view of a sequence. In-memory samples and disk-backed
// sequences both implement it; the trainer and evaluator only see this.
class Sequence {
 public:
  virtual ~Sequence() = default;
  virtual std::size_t length() const = 0;
  virtual const std::vector<BoundingBox>& boxes() const = 0;
  virtual Tensor frame(std::size_t t) const = 0;  // 0-based
  virtual const std::string& id() const = 0;
};

using SequencePtr = std::shared_ptr<const Sequence>;

enum class Background { kFlat, kNoise, kTexture };

Background background_from_string(const std::string& s);
std::string to_string(Background b);

struct SceneConfig {
  std::size_t height = 96;
  std::size_t width = 96;
  double sprite_min = 16.0;
  double sprite_max = 24.0;
  std::size_t distractors = 2;
  double vel_min = 0.5;
  double vel_max = 2.5;
  double occluder_prob = 0.25;
  double drift_rate = 0.01;  // per-frame random walk of sprite color
  Background background = Background::kNoise;
  std::size_t length = 30;
};

// One generated sequence: frames rendered to 8-bit (so the on-disk PNG round
// trip is exact), target ground truth, and per-frame distractor boxes kept
// for diagnostics.
class SequenceSample final : public Sequence {
 public:
  std::string sample_id;
  std::vector<Image8> frames_u8;
  std::vector<BoundingBox> gt_boxes;
  std::vector<std::vector<BoundingBox>> distractor_boxes;
  std::vector<std::vector<std::uint8_t>> target_alpha;  // per-frame sprite mask, [h*w]

  std::size_t length() const override { return frames_u8.size(); }
  const std::vector<BoundingBox>& boxes() const override { return gt_boxes; }
  Tensor frame(std::size_t t) const override { return image_to_tensor(frames_u8.at(t)); }
  const std::string& id() const override { return sample_id; }
};

// One target sprite with constant velocity plus a small random walk, N
// distractors of the same shape class in different colors, an optional
// occluder strip across the target's path. Deterministic in the seed.
SequenceSample generate_sequence(const SceneConfig& config, std::uint64_t seed);

// Writes dir/frames/NNNNNN.png (1-indexed) and dir/boxes.csv with header
// frame,x,y,w,h.
void write_sequence(const SequenceSample& sample, const std::string& dir);

// Generates `count` sequences under out_dir and writes manifest.txt listing
// the sequence directories one per line.
void write_synth_dataset(const SceneConfig& config, const std::string& out_dir, std::uint64_t seed,
                         std::size_t count);

// Contiguous window of the given length at a seeded uniform-random start;
// the box at the window start becomes b_1.
SequencePtr curriculum_window(const SequencePtr& sample, std::size_t length, std::uint64_t seed);
std::size_t curriculum_window_start(std::size_t sample_len, std::size_t length, std::uint64_t seed);

}  // namespace hart
