#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hart/tensor.hpp"

namespace hart {

// 8-bit RGB image, row-major [h][w][3].
struct Image8 {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * w + x) * 3 + c];
  }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * w + x) * 3 + c];
  }
  static Image8 make(std::size_t h, std::size_t w) { return {h, w, std::vector<std::uint8_t>(h * w * 3, 0)}; }
};

bool png_supported();

// Format chosen by extension: .png or .ppm (binary P6).
void write_image(const Image8& img, const std::string& path);
Image8 read_image(const std::string& path);

// Pixel k maps to k / 255 in [0, 1]; shape [H, W, 3].
Tensor image_to_tensor(const Image8& img);
Image8 tensor_to_image(const Tensor& t);  // clamps and rounds

// The frame file extension used by dataset writers (.png when built with
// libpng, .ppm otherwise).
std::string frame_extension();

}  // namespace hart
