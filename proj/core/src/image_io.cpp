#include "hart/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#ifdef HART_WITH_PNG
#include <png.h>
#endif

namespace hart {

bool png_supported() {
#ifdef HART_WITH_PNG
  return true;
#else
  return false;
#endif
}

std::string frame_extension() { return png_supported() ? ".png" : ".ppm"; }

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void write_ppm(const Image8& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_image: cannot open " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw std::runtime_error("write_image: write failed for " + path);
}

Image8 read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_image: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error("read_image: " + path + " is not a P6 PPM");
  std::size_t w = 0, h = 0;
  int maxval = 0;
  in >> w >> h >> maxval;
  if (maxval != 255) throw std::runtime_error("read_image: " + path + " must be 8-bit");
  in.get();  // single whitespace after header
  Image8 img = Image8::make(h, w);
  if (!in.read(reinterpret_cast<char*>(img.pixels.data()),
               static_cast<std::streamsize>(img.pixels.size())))
    throw std::runtime_error("read_image: truncated PPM " + path);
  return img;
}

#ifdef HART_WITH_PNG

struct PngFile {
  std::FILE* f = nullptr;
  explicit PngFile(const std::string& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {}
  ~PngFile() {
    if (f) std::fclose(f);
  }
};

void write_png(const Image8& img, const std::string& path) {
  PngFile file(path, "wb");
  if (!file.f) throw std::runtime_error("write_image: cannot open " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_image: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("write_image: libpng error for " + path);
  }
  png_init_io(png, file.f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(img.h);
  for (std::size_t y = 0; y < img.h; ++y)
    rows[y] = const_cast<png_bytep>(img.pixels.data() + y * img.w * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image8 read_png(const std::string& path) {
  PngFile file(path, "rb");
  if (!file.f) throw std::runtime_error("read_image: cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_image: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_image: libpng error for " + path);
  }
  png_init_io(png, file.f);
  png_read_info(png, info);
  // normalize to 8-bit RGB
  png_set_expand(png);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t w = png_get_image_width(png, info);
  const std::size_t h = png_get_image_height(png, info);
  if (png_get_rowbytes(png, info) != w * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("read_image: unexpected row size in " + path);
  }
  Image8 img = Image8::make(h, w);
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = img.pixels.data() + y * w * 3;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

#endif  // HART_WITH_PNG

}  // namespace

void write_image(const Image8& img, const std::string& path) {
  if (img.pixels.size() != img.h * img.w * 3)
    throw std::invalid_argument("write_image: inconsistent image buffer");
  if (ends_with(path, ".ppm")) {
    write_ppm(img, path);
    return;
  }
  if (ends_with(path, ".png")) {
#ifdef HART_WITH_PNG
    write_png(img, path);
    return;
#else
    throw std::runtime_error("write_image: built without libpng, use .ppm for " + path);
#endif
  }
  throw std::invalid_argument("write_image: unsupported extension in " + path);
}

Image8 read_image(const std::string& path) {
  if (ends_with(path, ".ppm")) return read_ppm(path);
  if (ends_with(path, ".png")) {
#ifdef HART_WITH_PNG
    return read_png(path);
#else
    throw std::runtime_error("read_image: built without libpng, cannot read " + path);
#endif
  }
  throw std::invalid_argument("read_image: unsupported extension in " + path);
}

Tensor image_to_tensor(const Image8& img) {
  Tensor t = Tensor::zeros({img.h, img.w, 3});
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    t.at(i) = static_cast<double>(img.pixels[i]) / 255.0;
  return t;
}

Image8 tensor_to_image(const Tensor& t) {
  if (t.rank() != 3 || t.dim(2) != 3)
    throw std::invalid_argument("tensor_to_image: expected [H,W,3], got " + shape_str(t.shape()));
  Image8 img = Image8::make(t.dim(0), t.dim(1));
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double v = std::round(std::min(std::max(t.at(i), 0.0), 1.0) * 255.0);
    img.pixels[i] = static_cast<std::uint8_t>(v);
  }
  return img;
}

}  // namespace hart
