#include "hart/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace hart {

namespace {

double eval_scalar(const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
  Tensor y = f(x);
  if (!y.defined() || y.size() != 1) {
    throw std::invalid_argument("finite_diff_check: f must be scalar-valued");
  }
  const double v = y.item();
  if (std::isnan(v)) throw std::runtime_error("finite_diff_check: f(x) is NaN");
  return v;
}

}  // namespace

FiniteDiffResult finite_diff_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                                   double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_diff_check: step must be positive");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x.data()[i]))
      throw std::invalid_argument("finite_diff_check: x has non-finite entries");
  }

  x.set_requires_grad(true);
  x.zero_grad();
  Tape tape;
  double f0;
  {
    TapeScope scope(tape);
    Tensor y = f(x);
    if (!y.defined() || y.size() != 1)
      throw std::invalid_argument("finite_diff_check: f must be scalar-valued");
    f0 = y.item();
    if (std::isnan(f0)) throw std::runtime_error("finite_diff_check: f(x) is NaN");
    tape.backward(y);
  }
  const std::vector<double> analytic = x.grad();

  FiniteDiffResult result;
  const double kink_threshold = 0.1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.at(i);
    x.at(i) = saved + step;
    const double fp = eval_scalar(f, x);
    x.at(i) = saved - step;
    const double fm = eval_scalar(f, x);
    x.at(i) = saved;

    // Second difference blows up to O(step * slope-jump) at a kink, while it
    // stays O(step^2 * f'') for smooth f.
    const double kink = std::abs(fp + fm - 2.0 * f0) / (step * std::max(1.0, std::abs(f0)));
    if (kink > kink_threshold) {
      result.flagged++;
      continue;
    }

    const double numeric = (fp - fm) / (2.0 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    result.max_rel_error = std::max(result.max_rel_error, rel);
    result.checked++;
  }
  return result;
}

double finite_diff_error(const std::function<Tensor(const Tensor&)>& f, Tensor x, double step) {
  return finite_diff_check(f, x, step).max_rel_error;
}

}  // namespace hart
