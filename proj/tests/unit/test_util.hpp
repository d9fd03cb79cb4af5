#pragma once

#include <hart/rng.hpp>
#include <hart/tensor.hpp>

namespace hart_test {

inline hart::Tensor random_tensor(hart::Shape shape, hart::Rng& rng, double lo = -2.0,
                                  double hi = 2.0, bool requires_grad = false) {
  hart::Tensor t = hart::Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace hart_test
