#include "hart/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace hart {

void rmsprop_step(std::vector<double>& values, const std::vector<double>& grads,
                  std::vector<double>& v_state, std::vector<double>& m_state,
                  const RmsPropConfig& cfg, const std::string& param_name) {
  if (grads.size() != values.size() || v_state.size() != values.size() ||
      m_state.size() != values.size()) {
    throw std::invalid_argument("rmsprop_step: size mismatch for " + param_name);
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double g = grads[i];
    if (std::isnan(g)) throw std::runtime_error("rmsprop_step: NaN gradient in " + param_name);
    v_state[i] = cfg.decay * v_state[i] + (1.0 - cfg.decay) * g * g;
    m_state[i] = cfg.momentum * m_state[i] + cfg.learning_rate * g / std::sqrt(v_state[i] + cfg.eps);
    values[i] -= m_state[i];
  }
}

RmsProp::RmsProp(RmsPropConfig cfg, const ParamList& params) : cfg_(cfg) {
  v_.reserve(params.size());
  m_.reserve(params.size());
  for (const NamedParam& p : params) {
    v_.emplace_back(p.value.size(), 0.0);
    m_.emplace_back(p.value.size(), 0.0);
  }
}

void RmsProp::step(ParamList& params) {
  if (params.size() != v_.size())
    throw std::invalid_argument("RmsProp::step: parameter list changed size");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params[i].value;
    if (t.grad().size() != t.size())
      throw std::runtime_error("RmsProp::step: missing gradient for " + params[i].name);
    rmsprop_step(t.values(), t.grad(), v_[i], m_[i], cfg_, params[i].name);
  }
}

}  // namespace hart
