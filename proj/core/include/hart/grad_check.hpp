#pragma once

#include <functional>

#include "hart/tensor.hpp"

namespace hart {

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t flagged = 0;  // elements skipped because f looks non-smooth there
};

// Central-difference check of reverse-mode gradients. f must build a scalar
// from x using tape ops; the checker supplies the tape. Elements where the
// second difference reveals a kink inside [x-step, x+step] (e.g. a clip
// boundary) are skipped and counted in `flagged`.
//
// Relative error per element: |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
FiniteDiffResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                   double step = 1e-5);

// Convenience: max relative error only.
double finite_diff_error(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                         double step = 1e-5);

}  // namespace hart
