#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hart/config.hpp"
#include "hart/losses.hpp"
#include "hart/optimizer.hpp"
#include "hart/synth.hpp"
#include "hart/tracker.hpp"

namespace hart {

struct TrainResult {
  std::size_t steps_run = 0;
  bool diverged = false;
  std::string final_checkpoint;  // last checkpoint written (always exists)
  std::string best_checkpoint;   // best final-stage epoch by training-window IoU
};

// RMSProp training with a curriculum over sequence length.
//
// Gradients for a minibatch are computed per sequence on separate tapes
// (optionally in parallel threads over immutable parameter snapshots) and
// reduced in sequence index order, so a step is bit-reproducible for a given
// seed. The coupled E[Psi] regularizer is handled exactly: workers receive
// the batch mean as a constant, which linearizes 0.5*||mean||^2 into
// per-sequence terms with identical gradients. Loss-weight gradients and the
// parameter L2 term are applied once by the coordinator.
class Trainer {
 public:
  Trainer(HartModel& model, const TrainConfig& cfg, std::vector<SequencePtr> dataset,
          std::string out_dir);
  ~Trainer();

  TrainResult run();

  // One gradient computation + RMSProp update on an explicit batch.
  LossBreakdown train_step(const std::vector<SequencePtr>& windows, std::uint64_t step_seed);

  // Gradient computation only; leaves grads on the model parameters and eta.
  LossBreakdown compute_gradients(const std::vector<SequencePtr>& windows,
                                  std::uint64_t step_seed);

  AdaptiveWeights& weights() { return weights_; }
  HartModel& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }

  // Stage lengths of the curriculum schedule (start, +increment, ..., <= max).
  static std::vector<std::size_t> curriculum_lengths(const TrainConfig& cfg);

 private:
  ParamList trainable_params();
  void clip_gradients(ParamList& params) const;

  HartModel& model_;
  TrainConfig cfg_;
  std::vector<SequencePtr> dataset_;
  std::string out_dir_;
  AdaptiveWeights weights_;
  std::size_t n_threads_;
  std::vector<std::unique_ptr<HartModel>> worker_models_;
  std::unique_ptr<RmsProp> optimizer_;
};

}  // namespace hart
