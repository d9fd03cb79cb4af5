#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hart/synth.hpp"
#include "hart/tracker.hpp"

namespace hart {

struct EvalReport {
  std::vector<double> curve;         // mean IoU per step; index k is frame t = k + 2
  std::vector<std::size_t> counts;   // sequences contributing per step
  double average = 0.0;              // mean over all (sequence, step) samples
  std::size_t sequences = 0;
  std::string config_hash;
};

// Predicted boxes for frames 2..min(length, horizon+1) of a sequence,
// initialized from the ground-truth box at frame 1.
using TrackFn = std::function<std::vector<BoundingBox>(const Sequence&, std::size_t horizon)>;

// Deterministic: eval-mode forward, sequences processed independently.
EvalReport evaluate(const HartModel& model, const std::vector<SequencePtr>& dataset,
                    std::size_t horizon, std::size_t threads = 0);

// Same aggregation with an injected tracker; used by tests to substitute
// oracles.
EvalReport evaluate_with(const TrackFn& tracker, const std::vector<SequencePtr>& dataset,
                         std::size_t horizon);

// Rows t,mean_iou,count followed by a summary row all,<average>,<sequences>.
void write_eval_csv(const EvalReport& report, const std::string& path);

}  // namespace hart
