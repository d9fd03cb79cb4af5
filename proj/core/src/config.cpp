#include "hart/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace hart {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Parses `key = value` lines and dispatches to per-key setters.
void parse_kv(const std::string& text, const std::string& origin,
              const std::map<std::string, std::function<void(const std::string&)>>& setters) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                               ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    try {
      it->second(value);
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": bad value for '" + key +
                               "': " + e.what());
    }
  }
}

double to_double(const std::string& v) { return std::stod(v); }
std::size_t to_size(const std::string& v) {
  const long long x = std::stoll(v);
  if (x < 0) throw std::invalid_argument("negative");
  return static_cast<std::size_t>(x);
}
std::uint64_t to_u64(const std::string& v) { return std::stoull(v); }

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw std::runtime_error("config: learning_rate must be > 0");
  if (curriculum_start < 2) throw std::runtime_error("config: curriculum_start must be >= 2");
  if (max_seq_len < curriculum_start)
    throw std::runtime_error("config: max_seq_len must be >= curriculum_start");
  if (batch_size < 1) throw std::runtime_error("config: batch_size must be >= 1");
  if (epsilon <= 0.0 || epsilon >= 0.5) throw std::runtime_error("config: epsilon must be in (0, 0.5)");
  if (beta < 0.0) throw std::runtime_error("config: beta must be >= 0");
  if (lr_stage_decay <= 0.0 || lr_stage_decay > 1.0)
    throw std::runtime_error("config: lr_stage_decay must be in (0, 1]");
  if (zoneout < 0.0 || zoneout >= 1.0) throw std::runtime_error("config: zoneout must be in [0, 1)");
  if (curriculum_schedule != "linear" && curriculum_schedule != "double")
    throw std::runtime_error("config: curriculum_schedule must be linear or double");
  if (dropout < 0.0 || dropout >= 1.0) throw std::runtime_error("config: dropout must be in [0, 1)");
  loss_mode_from_string(loss_mode);
  v1_preset_from_string(v1_preset);
}

TrainConfig parse_train_config_text(const std::string& text, const std::string& origin) {
  TrainConfig cfg;
  const std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"learning_rate", [&](const std::string& v) { cfg.learning_rate = to_double(v); }},
      {"momentum", [&](const std::string& v) { cfg.momentum = to_double(v); }},
      {"rmsprop_decay", [&](const std::string& v) { cfg.rmsprop_decay = to_double(v); }},
      {"batch_size", [&](const std::string& v) { cfg.batch_size = to_size(v); }},
      {"curriculum_start", [&](const std::string& v) { cfg.curriculum_start = to_size(v); }},
      {"curriculum_increment", [&](const std::string& v) { cfg.curriculum_increment = to_size(v); }},
      {"curriculum_schedule", [&](const std::string& v) { cfg.curriculum_schedule = v; }},
      {"epochs_per_stage", [&](const std::string& v) { cfg.epochs_per_stage = to_size(v); }},
      {"max_seq_len", [&](const std::string& v) { cfg.max_seq_len = to_size(v); }},
      {"base_steps_per_epoch", [&](const std::string& v) { cfg.base_steps_per_epoch = to_size(v); }},
      {"loss_mode", [&](const std::string& v) { cfg.loss_mode = v; }},
      {"beta", [&](const std::string& v) { cfg.beta = to_double(v); }},
      {"epsilon", [&](const std::string& v) { cfg.epsilon = to_double(v); }},
      {"seed", [&](const std::string& v) { cfg.seed = to_u64(v); }},
      {"glimpse_h", [&](const std::string& v) { cfg.glimpse_h = to_size(v); }},
      {"glimpse_w", [&](const std::string& v) { cfg.glimpse_w = to_size(v); }},
      {"v1_preset", [&](const std::string& v) { cfg.v1_preset = v; }},
      {"zoneout", [&](const std::string& v) { cfg.zoneout = to_double(v); }},
      {"dropout", [&](const std::string& v) { cfg.dropout = to_double(v); }},
      {"lstm_units", [&](const std::string& v) { cfg.lstm_units = to_size(v); }},
      {"grad_clip_norm", [&](const std::string& v) { cfg.grad_clip_norm = to_double(v); }},
      {"lr_stage_decay", [&](const std::string& v) { cfg.lr_stage_decay = to_double(v); }},
      {"threads", [&](const std::string& v) { cfg.threads = to_size(v); }},
      {"sigma_file", [&](const std::string& v) { cfg.sigma_file = v; }},
  };
  parse_kv(text, origin, setters);
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw std::runtime_error(origin + ": " + e.what());
  }
  return cfg;
}

TrainConfig parse_train_config(const std::string& path) {
  return parse_train_config_text(read_file(path), path);
}

void write_train_config(const TrainConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file " + path);
  out.precision(17);
  out << "learning_rate = " << cfg.learning_rate << "\n"
      << "momentum = " << cfg.momentum << "\n"
      << "rmsprop_decay = " << cfg.rmsprop_decay << "\n"
      << "batch_size = " << cfg.batch_size << "\n"
      << "curriculum_start = " << cfg.curriculum_start << "\n"
      << "curriculum_increment = " << cfg.curriculum_increment << "\n"
      << "curriculum_schedule = " << cfg.curriculum_schedule << "\n"
      << "epochs_per_stage = " << cfg.epochs_per_stage << "\n"
      << "max_seq_len = " << cfg.max_seq_len << "\n"
      << "base_steps_per_epoch = " << cfg.base_steps_per_epoch << "\n"
      << "loss_mode = " << cfg.loss_mode << "\n"
      << "beta = " << cfg.beta << "\n"
      << "epsilon = " << cfg.epsilon << "\n"
      << "seed = " << cfg.seed << "\n"
      << "glimpse_h = " << cfg.glimpse_h << "\n"
      << "glimpse_w = " << cfg.glimpse_w << "\n"
      << "v1_preset = " << cfg.v1_preset << "\n"
      << "zoneout = " << cfg.zoneout << "\n"
      << "dropout = " << cfg.dropout << "\n"
      << "lstm_units = " << cfg.lstm_units << "\n"
      << "grad_clip_norm = " << cfg.grad_clip_norm << "\n"
      << "lr_stage_decay = " << cfg.lr_stage_decay << "\n"
      << "threads = " << cfg.threads << "\n";
  if (!cfg.sigma_file.empty()) out << "sigma_file = " << cfg.sigma_file << "\n";
}

SceneConfig parse_scene_config_text(const std::string& text, const std::string& origin) {
  SceneConfig cfg;
  const std::map<std::string, std::function<void(const std::string&)>> setters = {
      {"image_h", [&](const std::string& v) { cfg.height = to_size(v); }},
      {"image_w", [&](const std::string& v) { cfg.width = to_size(v); }},
      {"sprite_min", [&](const std::string& v) { cfg.sprite_min = to_double(v); }},
      {"sprite_max", [&](const std::string& v) { cfg.sprite_max = to_double(v); }},
      {"distractors", [&](const std::string& v) { cfg.distractors = to_size(v); }},
      {"vel_min", [&](const std::string& v) { cfg.vel_min = to_double(v); }},
      {"vel_max", [&](const std::string& v) { cfg.vel_max = to_double(v); }},
      {"occluder_prob", [&](const std::string& v) { cfg.occluder_prob = to_double(v); }},
      {"drift_rate", [&](const std::string& v) { cfg.drift_rate = to_double(v); }},
      {"background", [&](const std::string& v) { cfg.background = background_from_string(v); }},
      {"length", [&](const std::string& v) { cfg.length = to_size(v); }},
  };
  parse_kv(text, origin, setters);
  return cfg;
}

SceneConfig parse_scene_config(const std::string& path) {
  return parse_scene_config_text(read_file(path), path);
}

}  // namespace hart
