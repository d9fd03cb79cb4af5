#pragma once

#include <string>
#include <vector>

#include "hart/rng.hpp"
#include "hart/tensor.hpp"

namespace hart {

struct NamedParam {
  std::string name;
  Tensor value;
};

using ParamList = std::vector<NamedParam>;

inline void init_uniform(Tensor& t, Rng& rng, double bound) {
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
}

// Glorot/Xavier uniform
inline void init_glorot(Tensor& t, Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  init_uniform(t, rng, bound);
}

// Orthogonalizes an n x n block via modified Gram-Schmidt on random normals.
void fill_orthogonal(double* block, std::size_t n, Rng& rng);

}  // namespace hart
