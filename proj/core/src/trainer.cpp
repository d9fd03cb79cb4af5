#include "hart/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <thread>

#include "hart/evaluator.hpp"
#include "hart/ops.hpp"

namespace hart {

namespace fs = std::filesystem;

Trainer::Trainer(HartModel& model, const TrainConfig& cfg, std::vector<SequencePtr> dataset,
                 std::string out_dir)
    : model_(model), cfg_(cfg), dataset_(std::move(dataset)), out_dir_(std::move(out_dir)) {
  cfg_.validate();
  if (dataset_.empty()) throw std::invalid_argument("Trainer: empty dataset");
  for (const SequencePtr& seq : dataset_) {
    if (seq->length() < cfg_.max_seq_len) {
      throw std::invalid_argument("Trainer: sequence " + seq->id() + " has " +
                                  std::to_string(seq->length()) + " frames, curriculum needs " +
                                  std::to_string(cfg_.max_seq_len));
    }
  }

  n_threads_ = cfg_.threads == 0 ? std::thread::hardware_concurrency() : cfg_.threads;
  if (n_threads_ == 0) n_threads_ = 1;
  n_threads_ = std::min(n_threads_, cfg_.batch_size);

  for (std::size_t w = 0; w < n_threads_; ++w) {
    worker_models_.push_back(std::make_unique<HartModel>(model_.config()));
    worker_models_[w]->copy_values_from(model_);
  }

  RmsPropConfig opt;
  opt.learning_rate = cfg_.learning_rate;
  opt.decay = cfg_.rmsprop_decay;
  opt.momentum = cfg_.momentum;
  ParamList params = trainable_params();
  optimizer_ = std::make_unique<RmsProp>(opt, params);
}

Trainer::~Trainer() = default;

ParamList Trainer::trainable_params() {
  ParamList params = model_.parameters();
  params.push_back({"train/eta", weights_.eta});
  return params;
}

std::vector<std::size_t> Trainer::curriculum_lengths(const TrainConfig& cfg) {
  std::vector<std::size_t> lens;
  std::size_t len = cfg.curriculum_start;
  while (len <= cfg.max_seq_len) {
    lens.push_back(len);
    if (cfg.curriculum_schedule == "double") {
      len *= 2;
    } else {
      if (cfg.curriculum_increment == 0) break;
      len += cfg.curriculum_increment;
    }
  }
  return lens;
}

void Trainer::clip_gradients(ParamList& params) const {
  if (cfg_.grad_clip_norm <= 0.0) return;
  double sq = 0.0;
  for (NamedParam& p : params)
    for (double g : p.value.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > cfg_.grad_clip_norm) {
    const double f = cfg_.grad_clip_norm / norm;
    for (NamedParam& p : params)
      for (double& g : p.value.grad()) g *= f;
  }
}

namespace {

struct SeqWork {
  std::unique_ptr<Tape> tape;
  Trajectory traj;
  SequenceTerms terms;
  Tensor bank_sum_tensor;  // sum_t Psi_t on this sequence's tape
  std::vector<BoundingBox> truth;
  BoundingBox image_box;
  std::vector<std::vector<double>> grads;  // per master param, after phase 2
  bool ok = false;
  std::string error;
};

// Phase 1: forward the sequence on its own tape, collect the loss terms.
void forward_sequence(const HartModel& model, const Sequence& seq, const LossConfig& lcfg,
                      std::uint64_t rng_seed, SeqWork& work) {
  try {
    work.tape = std::make_unique<Tape>();
    TapeScope scope(*work.tape);
    Rng rng(rng_seed);
    RunContext ctx;
    ctx.training = true;
    ctx.rng = &rng;
    ctx.mode = lcfg.mode;

    std::vector<Tensor> frames;
    frames.reserve(seq.length());
    for (std::size_t t = 0; t < seq.length(); ++t) frames.push_back(seq.frame(t));
    work.image_box = {0.0, 0.0, static_cast<double>(frames.front().dim(1)),
                      static_cast<double>(frames.front().dim(0))};
    work.truth = seq.boxes();

    work.traj = model.track_sequence(frames, work.truth.front(), ctx);
    work.terms = sequence_loss_terms(work.traj, work.truth, work.image_box, model.map_h(),
                                     model.map_w(), lcfg);
    if (!work.terms.banks_flat.empty()) {
      Tensor acc = work.terms.banks_flat[0];
      for (std::size_t i = 1; i < work.terms.banks_flat.size(); ++i)
        acc = add(acc, work.terms.banks_flat[i]);
      work.bank_sum_tensor = acc;
    }
    work.ok = true;
  } catch (const std::exception& e) {
    work.ok = false;
    work.error = e.what();
  }
}

// Phase 2: assemble this sequence's share of the batch loss and backprop it
// through the sequence tape. lambda values and the bank mean enter as
// constants; their own gradients are handled by the coordinator.
void backward_sequence(SeqWork& work, const ParamList& worker_params, double lt, double ls,
                       double la, double inv_batch, const std::vector<double>& bank_mean,
                       double beta_over_count, const LossConfig& lcfg) {
  try {
    TapeScope scope(*work.tape);
    Tensor loss = add(scale(work.terms.l_track, lt * inv_batch),
                      scale(work.terms.l_spatial, ls * inv_batch));
    if (lcfg.mode == LossMode::kFullHart)
      loss = add(loss, scale(work.terms.l_app, la * inv_batch));
    if (work.bank_sum_tensor.defined() && beta_over_count > 0.0) {
      Tensor m_const = Tensor::from({bank_mean.size()}, bank_mean);
      loss = add(loss, scale(sum(mul(m_const, work.bank_sum_tensor)), beta_over_count));
    }
    for (const NamedParam& p : worker_params) {
      Tensor t = p.value;
      t.zero_grad();
    }
    work.tape->backward(loss);
    work.grads.reserve(worker_params.size());
    for (const NamedParam& p : worker_params) {
      Tensor t = p.value;
      work.grads.push_back(t.grad());
    }
    work.tape.reset();  // free the graph
  } catch (const std::exception& e) {
    work.ok = false;
    work.error = e.what();
  }
}

}  // namespace

LossBreakdown Trainer::compute_gradients(const std::vector<SequencePtr>& windows,
                                         std::uint64_t step_seed) {
  const std::size_t M = windows.size();
  if (M == 0) throw std::invalid_argument("compute_gradients: empty batch");

  LossConfig lcfg;
  lcfg.epsilon = cfg_.epsilon;
  lcfg.beta = cfg_.beta;
  lcfg.mode = cfg_.mode();

  // immutable parameter snapshot for the workers
  for (auto& wm : worker_models_) wm->copy_values_from(model_);

  std::vector<SeqWork> work(M);
  auto phase1 = [&](std::size_t w) {
    for (std::size_t i = w; i < M; i += n_threads_) {
      forward_sequence(*worker_models_[w], *windows[i], lcfg,
                       Rng::mix(step_seed, 1000 + i), work[i]);
    }
  };
  if (n_threads_ <= 1) {
    phase1(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_threads_; ++w) pool.emplace_back(phase1, w);
    for (std::thread& t : pool) t.join();
  }
  for (const SeqWork& wk : work)
    if (!wk.ok) throw std::runtime_error("train step failed: " + wk.error);

  // batch mean of the dynamic filter banks
  std::vector<double> bank_mean;
  std::size_t bank_count = 0;
  for (const SeqWork& wk : work) bank_count += wk.terms.banks_flat.size();
  if (bank_count > 0 && lcfg.mode != LossMode::kSpatialAttOnly) {
    for (const SeqWork& wk : work) {
      if (!wk.bank_sum_tensor.defined()) continue;
      if (bank_mean.empty()) bank_mean.assign(wk.bank_sum_tensor.size(), 0.0);
      for (std::size_t j = 0; j < wk.bank_sum_tensor.size(); ++j)
        bank_mean[j] += wk.bank_sum_tensor.at(j);
    }
    for (double& v : bank_mean) v /= static_cast<double>(bank_count);
  }

  const double lt = weights_.lambda_value(0);
  const double ls = weights_.lambda_value(1);
  const double la = weights_.lambda_value(2);
  const double inv_batch = 1.0 / static_cast<double>(M);
  const double beta_over_count =
      bank_count > 0 ? cfg_.beta / static_cast<double>(bank_count) : 0.0;

  auto phase2 = [&](std::size_t w) {
    ParamList worker_params = worker_models_[w]->parameters();
    for (std::size_t i = w; i < M; i += n_threads_) {
      backward_sequence(work[i], worker_params, lt, ls, la, inv_batch, bank_mean,
                        beta_over_count, lcfg);
    }
  };
  if (n_threads_ <= 1) {
    phase2(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_threads_; ++w) pool.emplace_back(phase2, w);
    for (std::thread& t : pool) t.join();
  }
  for (const SeqWork& wk : work)
    if (!wk.ok) throw std::runtime_error("train step failed: " + wk.error);

  // reduced loss values
  double mean_l_track = 0.0, mean_l_spatial = 0.0, mean_l_app = 0.0, mean_iou_acc = 0.0;
  for (const SeqWork& wk : work) {
    mean_l_track += wk.terms.l_track.item();
    mean_l_spatial += wk.terms.l_spatial.item();
    if (wk.terms.l_app.defined()) mean_l_app += wk.terms.l_app.item();
    mean_iou_acc += wk.terms.mean_iou;
  }
  mean_l_track *= inv_batch;
  mean_l_spatial *= inv_batch;
  mean_l_app *= inv_batch;
  mean_iou_acc *= inv_batch;

  // Coordinator tape on the master parameters: loss-weight terms, R(lambda)
  // and the parameter L2. The bank mean term 0.5*||m||^2 contributes no
  // parameter gradient here (it flowed through the workers); its value is
  // added below.
  ParamList master = model_.parameters();
  for (NamedParam& p : master) p.value.zero_grad();
  weights_.eta.zero_grad();

  double r_lambda_value = 0.0, r_l2_value = 0.0, total_value = 0.0;
  {
    Tape reg_tape;
    TapeScope scope(reg_tape);
    Tensor weighted = mul(weights_.lambda(0), Tensor::scalar(mean_l_track));
    weighted = add(weighted, mul(weights_.lambda(1), Tensor::scalar(mean_l_spatial)));
    if (lcfg.mode == LossMode::kFullHart)
      weighted = add(weighted, mul(weights_.lambda(2), Tensor::scalar(mean_l_app)));
    Tensor r_lambda = adaptive_regularizer(weights_, active_lambda_count(lcfg.mode));
    Tensor theta_l2 = l2_regularizer(regularized_params(master, lcfg.mode), {});
    Tensor coord_loss = add(add(weighted, r_lambda), scale(theta_l2, cfg_.beta));
    reg_tape.backward(coord_loss);

    r_lambda_value = r_lambda.item();
    double bank_sq = 0.0;
    for (double v : bank_mean) bank_sq += v * v;
    r_l2_value = theta_l2.item() + 0.5 * bank_sq;
    total_value = weighted.item() + r_lambda_value + cfg_.beta * r_l2_value;
  }

  // reduce per-sequence gradients in sequence index order
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t p = 0; p < master.size(); ++p) {
      std::vector<double>& dst = master[p].value.grad();
      const std::vector<double>& src = work[i].grads[p];
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }

  LossBreakdown out;
  out.l_track = mean_l_track;
  out.l_spatial = mean_l_spatial;
  out.l_appearance = mean_l_app;
  out.r_lambda = r_lambda_value;
  out.r_l2 = r_l2_value;
  out.total = total_value;
  out.lambda_t = lt;
  out.lambda_s = ls;
  out.lambda_a = la;
  out.mean_iou = mean_iou_acc;
  return out;
}

LossBreakdown Trainer::train_step(const std::vector<SequencePtr>& windows,
                                  std::uint64_t step_seed) {
  LossBreakdown breakdown = compute_gradients(windows, step_seed);
  if (!std::isfinite(breakdown.total)) return breakdown;  // caller handles divergence
  ParamList params = trainable_params();
  clip_gradients(params);
  optimizer_->step(params);
  return breakdown;
}

TrainResult Trainer::run() {
  fs::create_directories(out_dir_);
  TrainResult result;

  const std::string init_ckpt = (fs::path(out_dir_) / "ckpt_init.hckpt").string();
  model_.save(init_ckpt);
  result.final_checkpoint = init_ckpt;

  std::ofstream log(fs::path(out_dir_) / "train_log.csv");
  if (!log) throw std::runtime_error("Trainer: cannot open train_log.csv under " + out_dir_);
  log << "step,seq_len,l_track,l_spatial,l_app,lambda_t,lambda_s,lambda_a,total,mean_iou\n";
  log.precision(10);

  const std::vector<std::size_t> lens = curriculum_lengths(cfg_);
  const std::string best_ckpt = (fs::path(out_dir_) / "ckpt_best.hckpt").string();
  double best_probe_iou = -1.0;

  // Model selection probe: a fixed slice of training sequences evaluated in
  // eval mode at the terminal curriculum length after every epoch. Selection
  // never sees held-out data.
  std::vector<SequencePtr> probe_set(dataset_.begin(),
                                     dataset_.begin() + std::min<std::size_t>(8, dataset_.size()));
  const std::size_t probe_horizon = cfg_.max_seq_len;
  auto run_probe = [&]() { return evaluate(model_, probe_set, probe_horizon, n_threads_).average; };

  std::size_t global_step = 0;
  std::size_t stage_index = 0;
  for (std::size_t len : lens) {
    optimizer_->set_learning_rate(cfg_.learning_rate *
                                  std::pow(cfg_.lr_stage_decay, static_cast<double>(stage_index)));
    ++stage_index;
    // epoch size shrinks as sequences lengthen
    const std::size_t steps_per_epoch = std::max<std::size_t>(
        1, cfg_.base_steps_per_epoch * cfg_.curriculum_start / len);
    const std::size_t stage_steps = cfg_.epochs_per_stage * steps_per_epoch;

    for (std::size_t s = 0; s < stage_steps; ++s) {
      const std::uint64_t step_seed = Rng::mix(cfg_.seed, global_step);
      Rng pick(Rng::mix(step_seed, 7));
      std::vector<SequencePtr> batch;
      batch.reserve(cfg_.batch_size);
      for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
        const std::size_t idx =
            static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(dataset_.size()) - 1));
        batch.push_back(curriculum_window(dataset_[idx], len, Rng::mix(step_seed, 100 + b)));
      }

      LossBreakdown bd;
      bool failed = false;
      try {
        bd = train_step(batch, step_seed);
      } catch (const std::exception& e) {
        std::cerr << "training aborted at step " << global_step << ": " << e.what() << "\n";
        failed = true;
      }
      if (failed || !std::isfinite(bd.total)) {
        result.diverged = true;
        result.steps_run = global_step;
        return result;  // last good checkpoint stays on disk
      }

      log << global_step << "," << len << "," << bd.l_track << "," << bd.l_spatial << ","
          << bd.l_appearance << "," << bd.lambda_t << "," << bd.lambda_s << "," << bd.lambda_a
          << "," << bd.total << "," << bd.mean_iou << "\n";
      ++global_step;

      // epoch-end probe: long stages oscillate batch to batch and can walk
      // away from earlier optima, so keep the best probe checkpoint
      if ((s + 1) % steps_per_epoch == 0) {
        const double probe_iou = run_probe();
        if (probe_iou > best_probe_iou) {
          best_probe_iou = probe_iou;
          model_.save(best_ckpt);
          result.best_checkpoint = best_ckpt;
        }
        std::cout << "  probe after step " << global_step << " (len " << len
                  << "): iou " << probe_iou << ", best " << best_probe_iou << "\n";
      }
    }
    log.flush();

    const std::string stage_ckpt =
        (fs::path(out_dir_) / ("ckpt_stage_" + std::to_string(len) + ".hckpt")).string();
    model_.save(stage_ckpt);
    result.final_checkpoint = stage_ckpt;
  }

  const std::string final_ckpt = (fs::path(out_dir_) / "ckpt_final.hckpt").string();
  model_.save(final_ckpt);
  result.final_checkpoint = final_ckpt;
  result.steps_run = global_step;
  if (result.best_checkpoint.empty()) result.best_checkpoint = final_ckpt;
  return result;
}

}  // namespace hart
