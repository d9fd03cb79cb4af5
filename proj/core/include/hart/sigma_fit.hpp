#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hart/attention.hpp"
#include "hart/tensor.hpp"

namespace hart {

// For each stride, searches the sigma that makes a Gaussian-grid glimpse best
// match a bilinear crop-and-resize of the same region (MSE over the corpus),
// then least-squares fits sigma*(gamma) with basis {1, g, g^2, g^3, g^4}.
// Throws on a degenerate corpus (constant images leave the targets
// underdetermined).
SigmaPolynomial fit_sigma_polynomial(const std::vector<double>& strides,
                                     const std::vector<Tensor>& corpus, std::size_t glimpse_size,
                                     std::uint64_t seed = 0, std::size_t positions_per_stride = 4);

// 5-line plain text file, one coefficient per line, axis-shared.
void save_sigma_polynomial(const SigmaPolynomial& poly, const std::string& path);
SigmaPolynomial load_sigma_polynomial(const std::string& path);

// Border-clamped bilinear sample of image [H,W,C] at continuous (y, x).
double sample_bilinear(const Tensor& image, double y, double x, std::size_t channel);

}  // namespace hart
