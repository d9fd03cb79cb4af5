#pragma once

#include <vector>

#include "hart/params.hpp"

namespace hart {

// RMSProp with momentum:
//   v <- decay*v + (1-decay)*g^2
//   m <- momentum*m + lr * g / sqrt(v + 1e-8)
//   p <- p - m
struct RmsPropConfig {
  double learning_rate = 1e-4;
  double decay = 0.9;
  double momentum = 0.9;
  double eps = 1e-8;
};

// Single-tensor update; state vectors must match the parameter size.
void rmsprop_step(std::vector<double>& values, const std::vector<double>& grads,
                  std::vector<double>& v_state, std::vector<double>& m_state,
                  const RmsPropConfig& cfg, const std::string& param_name);

class RmsProp {
 public:
  RmsProp(RmsPropConfig cfg, const ParamList& params);

  // Applies one update using each parameter's accumulated .grad.
  void step(ParamList& params);

  const RmsPropConfig& config() const { return cfg_; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }

 private:
  RmsPropConfig cfg_;
  std::vector<std::vector<double>> v_;
  std::vector<std::vector<double>> m_;
};

}  // namespace hart
