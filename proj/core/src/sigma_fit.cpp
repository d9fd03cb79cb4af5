#include "hart/sigma_fit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "hart/rng.hpp"

namespace hart {

double sample_bilinear(const Tensor& image, double y, double x, std::size_t channel) {
  const std::size_t H = image.dim(0), W = image.dim(1);
  const double yc = std::clamp(y, 0.0, static_cast<double>(H - 1));
  const double xc = std::clamp(x, 0.0, static_cast<double>(W - 1));
  const std::size_t y0 = static_cast<std::size_t>(yc);
  const std::size_t x0 = static_cast<std::size_t>(xc);
  const std::size_t y1 = std::min(y0 + 1, H - 1);
  const std::size_t x1 = std::min(x0 + 1, W - 1);
  const double fy = yc - static_cast<double>(y0);
  const double fx = xc - static_cast<double>(x0);
  const double v00 = image.at(y0, x0, channel);
  const double v01 = image.at(y0, x1, channel);
  const double v10 = image.at(y1, x0, channel);
  const double v11 = image.at(y1, x1, channel);
  return v00 * (1 - fy) * (1 - fx) + v01 * (1 - fy) * fx + v10 * fy * (1 - fx) + v11 * fy * fx;
}

namespace {

// Row-normalized Gaussian over integer pixel coordinates with explicit sigma.
// Value-only: used by the sigma search, not by the model path.
std::vector<double> gaussian_matrix(double center, double span, double sigma, std::size_t L,
                                    std::size_t n) {
  std::vector<double> m(n * L, 0.0);
  const double gamma = span / static_cast<double>(n - 1);
  const double inv2v = 1.0 / (2.0 * sigma * sigma);
  for (std::size_t r = 0; r < n; ++r) {
    const double mu = center - 0.5 * span + static_cast<double>(r) * gamma;
    double zmax = -1e300;
    for (std::size_t i = 0; i < L; ++i) {
      const double d = static_cast<double>(i) - mu;
      const double lg = -d * d * inv2v;
      m[r * L + i] = lg;
      zmax = std::max(zmax, lg);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
      m[r * L + i] = std::exp(m[r * L + i] - zmax);
      z += m[r * L + i];
    }
    for (std::size_t i = 0; i < L; ++i) m[r * L + i] /= z;
  }
  return m;
}

struct SamplePos {
  std::size_t image_index;
  double cx, cy;
};

double glimpse_mse(const Tensor& image, double cx, double cy, double span, double sigma,
                   std::size_t n) {
  const std::size_t H = image.dim(0), W = image.dim(1), C = image.dim(2);
  const auto ay = gaussian_matrix(cy, span, sigma, H, n);
  const auto ax = gaussian_matrix(cx, span, sigma, W, n);
  const double gamma = span / static_cast<double>(n - 1);

  double se = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t u = 0; u < n; ++u) {
      const double muy = cy - 0.5 * span + static_cast<double>(u) * gamma;
      for (std::size_t v = 0; v < n; ++v) {
        const double mux = cx - 0.5 * span + static_cast<double>(v) * gamma;
        // Gaussian glimpse entry: a_y[u,:] X a_x[v,:]^T
        double g = 0.0;
        for (std::size_t iy = 0; iy < H; ++iy) {
          const double wy = ay[u * H + iy];
          if (wy < 1e-14) continue;
          double row = 0.0;
          for (std::size_t ix = 0; ix < W; ++ix) {
            const double wx = ax[v * W + ix];
            if (wx < 1e-14) continue;
            row += wx * image.at(iy, ix, c);
          }
          g += wy * row;
        }
        const double target = sample_bilinear(image, muy, mux, c);
        const double d = g - target;
        se += d * d;
      }
    }
  }
  return se / static_cast<double>(n * n * C);
}

}  // namespace

SigmaPolynomial fit_sigma_polynomial(const std::vector<double>& strides,
                                     const std::vector<Tensor>& corpus, std::size_t glimpse_size,
                                     std::uint64_t seed, std::size_t positions_per_stride) {
  if (strides.size() < 20) {
    throw std::invalid_argument("fit_sigma_polynomial: need >= 20 stride samples, got " +
                                std::to_string(strides.size()));
  }
  if (corpus.empty()) throw std::invalid_argument("fit_sigma_polynomial: empty corpus");
  if (glimpse_size < 2) throw std::invalid_argument("fit_sigma_polynomial: glimpse_size < 2");

  // A constant corpus makes the MSE flat in sigma.
  double vmin = 1e300, vmax = -1e300;
  for (const Tensor& img : corpus) {
    for (std::size_t i = 0; i < img.size(); ++i) {
      vmin = std::min(vmin, img.data()[i]);
      vmax = std::max(vmax, img.data()[i]);
    }
  }
  if (vmax - vmin < 1e-9) {
    throw std::runtime_error(
        "fit_sigma_polynomial: degenerate corpus (constant images), sigma targets are "
        "underdetermined");
  }

  Rng rng(Rng::mix(seed, 0x51fa));
  const std::size_t n = glimpse_size;

  std::vector<double> gammas, targets;
  for (double gamma : strides) {
    if (gamma <= 0.0) throw std::invalid_argument("fit_sigma_polynomial: strides must be > 0");
    const double span = gamma * static_cast<double>(n - 1);

    std::vector<SamplePos> positions;
    for (std::size_t p = 0; p < positions_per_stride; ++p) {
      SamplePos sp;
      sp.image_index = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(corpus.size()) - 1));
      const Tensor& img = corpus[sp.image_index];
      const double H = static_cast<double>(img.dim(0));
      const double W = static_cast<double>(img.dim(1));
      // keep most of the window inside the frame
      sp.cx = rng.uniform(std::min(0.25 * W, 0.5 * span), std::max(W - std::min(0.25 * W, 0.5 * span), 0.0));
      sp.cy = rng.uniform(std::min(0.25 * H, 0.5 * span), std::max(H - std::min(0.25 * H, 0.5 * span), 0.0));
      positions.push_back(sp);
    }

    auto mse_at = [&](double sigma) {
      double acc = 0.0;
      for (const SamplePos& sp : positions)
        acc += glimpse_mse(corpus[sp.image_index], sp.cx, sp.cy, span, sigma, n);
      return acc / static_cast<double>(positions.size());
    };

    // coarse grid then golden-section refinement around the best cell
    const double lo = 0.05, hi = std::max(3.0 * gamma, 1.0);
    const std::size_t grid = 24;
    double best_s = lo, best_v = 1e300;
    for (std::size_t i = 0; i < grid; ++i) {
      const double s = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid - 1);
      const double v = mse_at(s);
      if (v < best_v) {
        best_v = v;
        best_s = s;
      }
    }
    const double cell = (hi - lo) / static_cast<double>(grid - 1);
    double a = std::max(lo, best_s - cell), b = std::min(hi, best_s + cell);
    const double phi = 0.6180339887498949;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = mse_at(x1), f2 = mse_at(x2);
    for (int it = 0; it < 24; ++it) {
      if (f1 < f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - phi * (b - a);
        f1 = mse_at(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + phi * (b - a);
        f2 = mse_at(x2);
      }
    }
    gammas.push_back(gamma);
    targets.push_back(0.5 * (a + b));
  }

  // least squares on polynomial basis via 5x5 normal equations
  constexpr std::size_t kBasis = 5;
  double ata[kBasis][kBasis] = {};
  double aty[kBasis] = {};
  for (std::size_t s = 0; s < gammas.size(); ++s) {
    double basis[kBasis];
    basis[0] = 1.0;
    for (std::size_t i = 1; i < kBasis; ++i) basis[i] = basis[i - 1] * gammas[s];
    for (std::size_t i = 0; i < kBasis; ++i) {
      aty[i] += basis[i] * targets[s];
      for (std::size_t j = 0; j < kBasis; ++j) ata[i][j] += basis[i] * basis[j];
    }
  }
  // Gaussian elimination with partial pivoting
  for (std::size_t col = 0; col < kBasis; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < kBasis; ++r)
      if (std::abs(ata[r][col]) > std::abs(ata[piv][col])) piv = r;
    if (std::abs(ata[piv][col]) < 1e-12)
      throw std::runtime_error("fit_sigma_polynomial: singular normal equations");
    std::swap(ata[col], ata[piv]);
    std::swap(aty[col], aty[piv]);
    for (std::size_t r = col + 1; r < kBasis; ++r) {
      const double f = ata[r][col] / ata[col][col];
      for (std::size_t c = col; c < kBasis; ++c) ata[r][c] -= f * ata[col][c];
      aty[r] -= f * aty[col];
    }
  }
  SigmaPolynomial poly;
  for (std::size_t r = kBasis; r-- > 0;) {
    double acc = aty[r];
    for (std::size_t c = r + 1; c < kBasis; ++c) acc -= ata[r][c] * poly.coeffs[c];
    poly.coeffs[r] = acc / ata[r][r];
  }
  return poly;
}

void save_sigma_polynomial(const SigmaPolynomial& poly, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_sigma_polynomial: cannot open " + path);
  out.precision(17);
  for (double c : poly.coeffs) out << c << "\n";
  if (!out) throw std::runtime_error("save_sigma_polynomial: write failed for " + path);
}

SigmaPolynomial load_sigma_polynomial(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_sigma_polynomial: cannot open " + path);
  SigmaPolynomial poly;
  for (double& c : poly.coeffs) {
    if (!(in >> c)) throw std::runtime_error("load_sigma_polynomial: " + path + " needs 5 coefficients");
  }
  return poly;
}

}  // namespace hart
