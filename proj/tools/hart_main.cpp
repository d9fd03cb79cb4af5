// hart: train, evaluate and run the tracker; generate synthetic datasets and
// fit the attention sigma polynomial.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <hart/config.hpp>
#include <hart/dataset.hpp>
#include <hart/evaluator.hpp>
#include <hart/image_io.hpp>
#include <hart/sigma_fit.hpp>
#include <hart/synth.hpp>
#include <hart/tracker.hpp>
#include <hart/trainer.hpp>

namespace fs = std::filesystem;
using namespace hart;

namespace {

ModelConfig model_config_from_train(const TrainConfig& cfg) {
  ModelConfig mc;
  mc.glimpse_h = cfg.glimpse_h;
  mc.glimpse_w = cfg.glimpse_w;
  mc.v1_preset = cfg.preset();
  mc.lstm_units = cfg.lstm_units;
  mc.dropout = cfg.dropout;
  mc.zoneout = cfg.zoneout;
  mc.init_seed = cfg.seed;
  if (!cfg.sigma_file.empty()) mc.sigma = load_sigma_polynomial(cfg.sigma_file);
  return mc;
}

// `--set key=value` overrides on top of an optional scene config file.
SceneConfig scene_config(const std::string& config_path, const std::vector<std::string>& sets) {
  std::string text;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open scene config " + config_path);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  for (const std::string& s : sets) text += "\n" + s + "\n";
  return parse_scene_config_text(text, config_path.empty() ? "<cli>" : config_path);
}

int cmd_synth_data(const std::string& config_path, const std::vector<std::string>& sets,
                   const std::string& out_dir, std::uint64_t seed, std::size_t count) {
  SceneConfig cfg = scene_config(config_path, sets);
  write_synth_dataset(cfg, out_dir, seed, count);
  std::cout << "wrote " << count << " sequences to " << out_dir << "\n";
  return 0;
}

int cmd_fit_sigma(const std::string& manifest, const std::string& out_path, std::size_t glimpse,
                  std::size_t n_strides, std::uint64_t seed) {
  std::vector<SequencePtr> dataset = load_dataset(manifest);
  std::vector<Tensor> corpus;
  Rng rng(Rng::mix(seed, 0xf17));
  const std::size_t budget = std::min<std::size_t>(dataset.size(), 16);
  for (std::size_t i = 0; i < budget; ++i) {
    const SequencePtr& seq = dataset[i * dataset.size() / budget];
    corpus.push_back(seq->frame(static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(seq->length()) - 1))));
  }
  // strides spanning sub-pixel to several pixels per grid cell
  std::vector<double> strides;
  for (std::size_t i = 0; i < n_strides; ++i)
    strides.push_back(0.25 + (6.0 - 0.25) * static_cast<double>(i) / static_cast<double>(n_strides - 1));
  SigmaPolynomial poly = fit_sigma_polynomial(strides, corpus, glimpse, seed);
  save_sigma_polynomial(poly, out_path);
  std::cout << "sigma coefficients written to " << out_path << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& manifest,
              const std::string& out_dir) {
  TrainConfig cfg = parse_train_config(config_path);
  std::vector<SequencePtr> dataset = load_dataset(manifest);
  HartModel model(model_config_from_train(cfg));
  Trainer trainer(model, cfg, dataset, out_dir);
  TrainResult result = trainer.run();
  if (result.diverged) {
    std::cerr << "training diverged after " << result.steps_run
              << " steps; last good checkpoint: " << result.final_checkpoint << "\n";
    return 2;
  }
  std::cout << "trained " << result.steps_run << " steps, final checkpoint "
            << result.final_checkpoint << ", best " << result.best_checkpoint << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest, std::size_t horizon,
             const std::string& out_path) {
  HartModel model = HartModel::load_from_checkpoint(ckpt);
  std::vector<SequencePtr> dataset = load_dataset(manifest);
  EvalReport report = evaluate(model, dataset, horizon);
  write_eval_csv(report, out_path);
  std::cout << "avg IoU over " << horizon << " steps: " << report.average << " ("
            << report.sequences << " sequences), report " << out_path << "\n";
  return 0;
}

void draw_box(Image8& img, const BoundingBox& b, std::uint8_t r, std::uint8_t g, std::uint8_t bl) {
  const long x0 = static_cast<long>(std::llround(b.x));
  const long y0 = static_cast<long>(std::llround(b.y));
  const long x1 = static_cast<long>(std::llround(b.x + b.w));
  const long y1 = static_cast<long>(std::llround(b.y + b.h));
  auto put = [&](long y, long x) {
    if (y < 0 || x < 0 || y >= static_cast<long>(img.h) || x >= static_cast<long>(img.w)) return;
    img.at(y, x, 0) = r;
    img.at(y, x, 1) = g;
    img.at(y, x, 2) = bl;
  };
  for (long x = x0; x <= x1; ++x) {
    put(y0, x);
    put(y1, x);
  }
  for (long y = y0; y <= y1; ++y) {
    put(y, x0);
    put(y, x1);
  }
}

// nearest-neighbour upsample of the location map into the attention window
void blend_location_map(Image8& img, const Tensor& smap, const BoundingBox& window) {
  const std::size_t mh = smap.dim(0), mw = smap.dim(1);
  const long x0 = std::max(0L, static_cast<long>(std::llround(window.x)));
  const long y0 = std::max(0L, static_cast<long>(std::llround(window.y)));
  const long x1 = std::min(static_cast<long>(img.w) - 1, static_cast<long>(std::llround(window.x + window.w)));
  const long y1 = std::min(static_cast<long>(img.h) - 1, static_cast<long>(std::llround(window.y + window.h)));
  for (long y = y0; y <= y1; ++y)
    for (long x = x0; x <= x1; ++x) {
      const double fy = (static_cast<double>(y) - window.y) / window.h;
      const double fx = (static_cast<double>(x) - window.x) / window.w;
      const std::size_t my = std::min(mh - 1, static_cast<std::size_t>(std::max(0.0, fy * mh)));
      const std::size_t mx = std::min(mw - 1, static_cast<std::size_t>(std::max(0.0, fx * mw)));
      const double a = 0.45 * smap.at(my, mx);
      img.at(y, x, 0) = static_cast<std::uint8_t>((1.0 - a) * img.at(y, x, 0) + a * 255.0);
      img.at(y, x, 1) = static_cast<std::uint8_t>((1.0 - a) * img.at(y, x, 1) + a * 255.0);
    }
}

int cmd_track(const std::string& ckpt, const std::string& seq_dir, const std::string& box_str,
              const std::string& out_dir, bool overlays) {
  HartModel model = HartModel::load_from_checkpoint(ckpt);
  SequencePtr seq = load_sequence_dir(seq_dir);

  BoundingBox b1;
  if (std::sscanf(box_str.c_str(), "%lf,%lf,%lf,%lf", &b1.x, &b1.y, &b1.w, &b1.h) != 4) {
    throw std::runtime_error("--box expects x,y,w,h, got '" + box_str + "'");
  }

  std::vector<Tensor> frames;
  for (std::size_t t = 0; t < seq->length(); ++t) frames.push_back(seq->frame(t));
  RunContext ctx;  // eval mode
  Trajectory traj = model.track_sequence(frames, b1, ctx);

  fs::create_directories(out_dir);
  std::ofstream csv(fs::path(out_dir) / "trajectory.csv");
  if (!csv) throw std::runtime_error("cannot write trajectory.csv under " + out_dir);
  csv << "t,x,y,w,h,att_cx,att_cy,att_sx,att_sy\n";
  csv.precision(10);
  const Tensor& a1 = traj.init_attention;
  csv << 1 << "," << b1.x << "," << b1.y << "," << b1.w << "," << b1.h << "," << a1.at(0) << ","
      << a1.at(1) << "," << a1.at(2) << "," << a1.at(3) << "\n";
  for (const StepOutput& so : traj.steps) {
    const Tensor& att = so.attention_used;
    csv << so.t << "," << so.bbox_value.x << "," << so.bbox_value.y << "," << so.bbox_value.w
        << "," << so.bbox_value.h << "," << att.at(0) << "," << att.at(1) << "," << att.at(2)
        << "," << att.at(3) << "\n";
  }

  if (overlays) {
    for (const StepOutput& so : traj.steps) {
      Image8 img = tensor_to_image(frames[so.t - 1]);
      const AttentionParams att = AttentionParams::from_tensor(so.attention_used);
      const BoundingBox window = attention_to_box(att);
      blend_location_map(img, so.location_map, window);
      draw_box(img, window, 0, 200, 0);
      draw_box(img, so.bbox_value, 230, 30, 30);
      char name[32];
      std::snprintf(name, sizeof(name), "overlay_%06zu", so.t);
      write_image(img, (fs::path(out_dir) / (std::string(name) + frame_extension())).string());
    }
  }
  std::cout << "trajectory written to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical attentive recurrent tracking"};
  app.require_subcommand(1);

  // synth-data
  std::string sd_config, sd_out;
  std::vector<std::string> sd_sets;
  std::uint64_t sd_seed = 1;
  std::size_t sd_count = 10;
  auto* synth = app.add_subcommand("synth-data", "generate a synthetic tracking dataset");
  synth->add_option("--config", sd_config, "scene config file (key = value)");
  synth->add_option("--set", sd_sets, "override scene keys, e.g. --set image_h=96")->take_all();
  synth->add_option("--out", sd_out, "output dataset directory")->required();
  synth->add_option("--seed", sd_seed, "generation seed");
  synth->add_option("--count", sd_count, "number of sequences");

  // fit-sigma
  std::string fs_data, fs_out = "sigma.txt";
  std::size_t fs_glimpse = 28, fs_strides = 24;
  std::uint64_t fs_seed = 1;
  auto* fit = app.add_subcommand("fit-sigma", "fit the stride-to-sigma polynomial");
  fit->add_option("--data", fs_data, "dataset manifest")->required();
  fit->add_option("--out", fs_out, "output coefficients file");
  fit->add_option("--glimpse", fs_glimpse, "glimpse grid size");
  fit->add_option("--strides", fs_strides, "number of stride samples (>= 20)");
  fit->add_option("--seed", fs_seed, "sampling seed");

  // train
  std::string tr_config, tr_data, tr_out;
  auto* train = app.add_subcommand("train", "train a tracker");
  train->add_option("--config", tr_config, "train config file")->required();
  train->add_option("--data", tr_data, "dataset manifest")->required();
  train->add_option("--out", tr_out, "output directory")->required();

  // eval
  std::string ev_ckpt, ev_data, ev_out = "report.csv";
  std::size_t ev_horizon = 20;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", ev_data, "dataset manifest")->required();
  eval_cmd->add_option("--horizon", ev_horizon, "evaluation horizon in steps");
  eval_cmd->add_option("--out", ev_out, "output CSV");

  // track
  std::string tk_ckpt, tk_seq, tk_box, tk_out = "track_out";
  bool tk_overlays = false;
  auto* track = app.add_subcommand("track", "track one sequence");
  track->add_option("--ckpt", tk_ckpt, "checkpoint file")->required();
  track->add_option("--seq", tk_seq, "sequence directory (frames/ + boxes.csv)")->required();
  track->add_option("--box", tk_box, "initial box x,y,w,h")->required();
  track->add_option("--out", tk_out, "output directory");
  track->add_flag("--overlays", tk_overlays, "write per-frame overlay images");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth_data(sd_config, sd_sets, sd_out, sd_seed, sd_count);
    if (fit->parsed()) return cmd_fit_sigma(fs_data, fs_out, fs_glimpse, fs_strides, fs_seed);
    if (train->parsed()) return cmd_train(tr_config, tr_data, tr_out);
    if (eval_cmd->parsed()) return cmd_eval(ev_ckpt, ev_data, ev_horizon, ev_out);
    if (track->parsed()) return cmd_track(tk_ckpt, tk_seq, tk_box, tk_out, tk_overlays);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
