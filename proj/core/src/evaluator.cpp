#include "hart/evaluator.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace hart {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_report_inputs(const HartModel* model, const std::vector<SequencePtr>& dataset,
                               std::size_t horizon) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::uint64_t hz = horizon;
  h = fnv1a(h, &hz, sizeof(hz));
  for (const SequencePtr& s : dataset) h = fnv1a(h, s->id().data(), s->id().size());
  if (model) {
    for (const NamedParam& p : model->parameters())
      h = fnv1a(h, p.value.data(), p.value.size() * sizeof(double));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

EvalReport aggregate(const std::vector<std::vector<double>>& ious_by_seq, std::size_t horizon) {
  EvalReport rep;
  rep.curve.assign(horizon, 0.0);
  rep.counts.assign(horizon, 0);
  double total = 0.0;
  std::size_t samples = 0;
  for (const auto& seq_ious : ious_by_seq) {
    for (std::size_t k = 0; k < seq_ious.size() && k < horizon; ++k) {
      rep.curve[k] += seq_ious[k];
      rep.counts[k] += 1;
      total += seq_ious[k];
      ++samples;
    }
  }
  for (std::size_t k = 0; k < horizon; ++k)
    if (rep.counts[k] > 0) rep.curve[k] /= static_cast<double>(rep.counts[k]);
  rep.average = samples > 0 ? total / static_cast<double>(samples) : 0.0;
  rep.sequences = ious_by_seq.size();
  return rep;
}

std::vector<double> sequence_ious(const TrackFn& tracker, const Sequence& seq,
                                  std::size_t horizon) {
  const std::vector<BoundingBox> pred = tracker(seq, horizon);
  const std::vector<BoundingBox>& truth = seq.boxes();
  std::vector<double> out;
  out.reserve(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (k + 1 >= truth.size()) break;
    out.push_back(iou(pred[k], truth[k + 1]));
  }
  return out;
}

}  // namespace

EvalReport evaluate_with(const TrackFn& tracker, const std::vector<SequencePtr>& dataset,
                         std::size_t horizon) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (horizon < 1) throw std::invalid_argument("evaluate: horizon must be >= 1");
  std::vector<std::vector<double>> ious(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i)
    ious[i] = sequence_ious(tracker, *dataset[i], horizon);
  EvalReport rep = aggregate(ious, horizon);
  rep.config_hash = hash_report_inputs(nullptr, dataset, horizon);
  return rep;
}

EvalReport evaluate(const HartModel& model, const std::vector<SequencePtr>& dataset,
                    std::size_t horizon, std::size_t threads) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (horizon < 1) throw std::invalid_argument("evaluate: horizon must be >= 1");

  auto track_one = [&model](const Sequence& seq, std::size_t hz) {
    const std::size_t frames_n = std::min(seq.length(), hz + 1);
    std::vector<Tensor> frames;
    frames.reserve(frames_n);
    for (std::size_t t = 0; t < frames_n; ++t) frames.push_back(seq.frame(t));
    RunContext ctx;  // eval mode
    Trajectory traj = model.track_sequence(frames, seq.boxes().front(), ctx);
    std::vector<BoundingBox> pred;
    pred.reserve(traj.steps.size());
    for (const StepOutput& so : traj.steps) pred.push_back(so.bbox_value);
    return pred;
  };

  std::size_t n_threads = threads == 0 ? std::thread::hardware_concurrency() : threads;
  if (n_threads == 0) n_threads = 1;
  n_threads = std::min(n_threads, dataset.size());

  std::vector<std::vector<double>> ious(dataset.size());
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < dataset.size(); ++i)
      ious[i] = sequence_ious(track_one, *dataset[i], horizon);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_threads; ++w) {
      pool.emplace_back([&, w]() {
        for (std::size_t i = w; i < dataset.size(); i += n_threads)
          ious[i] = sequence_ious(track_one, *dataset[i], horizon);
      });
    }
    for (std::thread& t : pool) t.join();
  }

  EvalReport rep = aggregate(ious, horizon);
  rep.config_hash = hash_report_inputs(&model, dataset, horizon);
  return rep;
}

void write_eval_csv(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_eval_csv: cannot open " + path);
  out.precision(17);
  out << "t,mean_iou,count\n";
  for (std::size_t k = 0; k < report.curve.size(); ++k)
    out << (k + 2) << "," << report.curve[k] << "," << report.counts[k] << "\n";
  out << "all," << report.average << "," << report.sequences << "\n";
  if (!out) throw std::runtime_error("write_eval_csv: write failed for " + path);
}

}  // namespace hart
