#include "hart/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "hart/rng.hpp"

namespace hart {

namespace fs = std::filesystem;

Background background_from_string(const std::string& s) {
  if (s == "flat") return Background::kFlat;
  if (s == "noise") return Background::kNoise;
  if (s == "texture") return Background::kTexture;
  throw std::invalid_argument("unknown background '" + s + "' (expected flat, noise or texture)");
}

std::string to_string(Background b) {
  switch (b) {
    case Background::kFlat: return "flat";
    case Background::kNoise: return "noise";
    default: return "texture";
  }
}

namespace {

enum class ShapeClass { kRect, kDisc, kTriangle };

struct Color {
  double r, g, b;
};

double color_dist(const Color& a, const Color& b) {
  return std::sqrt((a.r - b.r) * (a.r - b.r) + (a.g - b.g) * (a.g - b.g) +
                   (a.b - b.b) * (a.b - b.b));
}

Color random_color(Rng& rng) { return {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)}; }

struct Sprite {
  ShapeClass shape;
  Color color;
  double size;    // extent in px
  double cx, cy;  // center
  double vx, vy;
};

// pixel-center containment test
bool inside_sprite(const Sprite& s, double px, double py) {
  const double dx = px - s.cx;
  const double dy = py - s.cy;
  const double half = 0.5 * s.size;
  switch (s.shape) {
    case ShapeClass::kRect:
      return std::abs(dx) <= half && std::abs(dy) <= half;
    case ShapeClass::kDisc:
      return dx * dx + dy * dy <= half * half;
    case ShapeClass::kTriangle: {
      // up-pointing isoceles triangle inscribed in the size x size square
      if (dy < -half || dy > half) return false;
      const double frac = (dy + half) / s.size;  // 0 at apex, 1 at base
      return std::abs(dx) <= half * frac;
    }
  }
  return false;
}

BoundingBox sprite_box(const Sprite& s) {
  return {s.cx - 0.5 * s.size, s.cy - 0.5 * s.size, s.size, s.size};
}

void paint_sprite(Image8& img, const Sprite& s, std::vector<std::uint8_t>* alpha) {
  const std::size_t H = img.h, W = img.w;
  const long y0 = std::max(0L, static_cast<long>(std::floor(s.cy - 0.5 * s.size)));
  const long y1 = std::min<long>(H - 1, static_cast<long>(std::ceil(s.cy + 0.5 * s.size)));
  const long x0 = std::max(0L, static_cast<long>(std::floor(s.cx - 0.5 * s.size)));
  const long x1 = std::min<long>(W - 1, static_cast<long>(std::ceil(s.cx + 0.5 * s.size)));
  for (long y = y0; y <= y1; ++y)
    for (long x = x0; x <= x1; ++x) {
      if (!inside_sprite(s, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) continue;
      img.at(y, x, 0) = static_cast<std::uint8_t>(std::round(s.color.r * 255.0));
      img.at(y, x, 1) = static_cast<std::uint8_t>(std::round(s.color.g * 255.0));
      img.at(y, x, 2) = static_cast<std::uint8_t>(std::round(s.color.b * 255.0));
      if (alpha) (*alpha)[y * W + x] = 1;
    }
}

void bounce(Sprite& s, double W, double H) {
  const double half = 0.5 * s.size;
  if (s.cx - half < 0.0) {
    s.cx = half + (half - s.cx);
    s.vx = std::abs(s.vx);
  }
  if (s.cx + half > W) {
    s.cx = (W - half) - (s.cx + half - W);
    s.vx = -std::abs(s.vx);
  }
  if (s.cy - half < 0.0) {
    s.cy = half + (half - s.cy);
    s.vy = std::abs(s.vy);
  }
  if (s.cy + half > H) {
    s.cy = (H - half) - (s.cy + half - H);
    s.vy = -std::abs(s.vy);
  }
}

}  // namespace

SequenceSample generate_sequence(const SceneConfig& config, std::uint64_t seed) {
  if (config.length < 2) throw std::invalid_argument("generate_sequence: length must be >= 2");
  if (config.sprite_max + 2.0 > std::min(config.width, config.height))
    throw std::invalid_argument("generate_sequence: sprites do not fit in the frame");

  Rng rng(Rng::mix(seed, 0x5ce0e));
  const double W = static_cast<double>(config.width);
  const double H = static_cast<double>(config.height);

  SequenceSample sample;
  sample.sample_id = "seq_" + std::to_string(seed);

  // static background for the whole sequence
  Image8 background = Image8::make(config.height, config.width);
  switch (config.background) {
    case Background::kFlat: {
      const double v = rng.uniform(0.25, 0.6);
      for (std::size_t i = 0; i < background.pixels.size(); ++i)
        background.pixels[i] = static_cast<std::uint8_t>(std::round(v * 255.0));
      break;
    }
    case Background::kNoise: {
      for (std::size_t i = 0; i < background.pixels.size(); i += 3) {
        const double v = rng.uniform(0.2, 0.8);
        const std::uint8_t q = static_cast<std::uint8_t>(std::round(v * 255.0));
        background.pixels[i] = background.pixels[i + 1] = background.pixels[i + 2] = q;
      }
      break;
    }
    case Background::kTexture: {
      const double fx = rng.uniform(0.05, 0.2), fy = rng.uniform(0.05, 0.2);
      const double px = rng.uniform(0.0, 6.28), py = rng.uniform(0.0, 6.28);
      for (std::size_t y = 0; y < config.height; ++y)
        for (std::size_t x = 0; x < config.width; ++x) {
          const double v =
              0.45 + 0.2 * std::sin(fx * static_cast<double>(x) + px) * std::cos(fy * static_cast<double>(y) + py);
          const std::uint8_t q = static_cast<std::uint8_t>(std::round(v * 255.0));
          background.at(y, x, 0) = background.at(y, x, 1) = background.at(y, x, 2) = q;
        }
      break;
    }
  }

  const ShapeClass shape_class =
      static_cast<ShapeClass>(rng.uniform_int(0, 2));  // distractors share it

  auto spawn = [&](double size) {
    Sprite s;
    s.shape = shape_class;
    s.size = size;
    const double half = 0.5 * size + 1.0;
    s.cx = rng.uniform(half, W - half);
    s.cy = rng.uniform(half, H - half);
    const double speed = rng.uniform(config.vel_min, config.vel_max);
    const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    s.vx = speed * std::cos(angle);
    s.vy = speed * std::sin(angle);
    return s;
  };

  Sprite target = spawn(rng.uniform(config.sprite_min, config.sprite_max));
  target.color = random_color(rng);

  std::vector<Sprite> distractors;
  for (std::size_t d = 0; d < config.distractors; ++d) {
    Sprite s = spawn(rng.uniform(config.sprite_min, config.sprite_max));
    do {
      s.color = random_color(rng);
    } while (color_dist(s.color, target.color) < 0.35);
    distractors.push_back(s);
  }

  // occluder strip across the target's expected mid-trajectory position
  const bool has_occluder = rng.uniform() < config.occluder_prob;
  const bool occluder_vertical = rng.bernoulli(0.5);
  const double occ_width = rng.uniform(0.4, 0.8) * target.size;
  const double mid_t = 0.5 * static_cast<double>(config.length);
  const double occ_pos = occluder_vertical ? std::clamp(target.cx + target.vx * mid_t, 0.0, W - occ_width)
                                           : std::clamp(target.cy + target.vy * mid_t, 0.0, H - occ_width);
  Color occ_color;
  do {
    occ_color = random_color(rng);
  } while (color_dist(occ_color, target.color) < 0.35);

  for (std::size_t t = 0; t < config.length; ++t) {
    Image8 frame = background;
    std::vector<std::uint8_t> alpha(config.height * config.width, 0);

    std::vector<BoundingBox> dist_boxes;
    for (Sprite& d : distractors) {
      paint_sprite(frame, d, nullptr);
      dist_boxes.push_back(sprite_box(d));
    }
    paint_sprite(frame, target, &alpha);
    if (has_occluder) {
      const long lo = static_cast<long>(std::round(occ_pos));
      const long hi = static_cast<long>(std::round(occ_pos + occ_width));
      for (std::size_t y = 0; y < config.height; ++y)
        for (std::size_t x = 0; x < config.width; ++x) {
          const long v = occluder_vertical ? static_cast<long>(x) : static_cast<long>(y);
          if (v >= lo && v < hi) {
            frame.at(y, x, 0) = static_cast<std::uint8_t>(std::round(occ_color.r * 255.0));
            frame.at(y, x, 1) = static_cast<std::uint8_t>(std::round(occ_color.g * 255.0));
            frame.at(y, x, 2) = static_cast<std::uint8_t>(std::round(occ_color.b * 255.0));
          }
        }
    }

    // ground truth is the tight box of the painted mask, like hand-labelled
    // pixel annotations would be
    BoundingBox tight = sprite_box(target);
    {
      std::size_t x0 = config.width, x1 = 0, y0 = config.height, y1 = 0;
      bool any = false;
      for (std::size_t y = 0; y < config.height; ++y)
        for (std::size_t x = 0; x < config.width; ++x) {
          if (!alpha[y * config.width + x]) continue;
          any = true;
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
        }
      if (any) {
        tight = {static_cast<double>(x0), static_cast<double>(y0),
                 static_cast<double>(x1 - x0 + 1), static_cast<double>(y1 - y0 + 1)};
      }
    }
    sample.frames_u8.push_back(std::move(frame));
    sample.gt_boxes.push_back(tight);
    sample.distractor_boxes.push_back(std::move(dist_boxes));
    sample.target_alpha.push_back(std::move(alpha));

    // advance motion: constant velocity plus a random walk that scales with
    // speed, so zero-velocity scenes are exactly static
    auto walk = [&](const Sprite& s) {
      const double speed = std::sqrt(s.vx * s.vx + s.vy * s.vy);
      return rng.normal(0.0, 0.08 * speed);
    };
    target.cx += target.vx + walk(target);
    target.cy += target.vy + walk(target);
    bounce(target, W, H);
    target.color.r = std::clamp(target.color.r + config.drift_rate * rng.normal(), 0.0, 1.0);
    target.color.g = std::clamp(target.color.g + config.drift_rate * rng.normal(), 0.0, 1.0);
    target.color.b = std::clamp(target.color.b + config.drift_rate * rng.normal(), 0.0, 1.0);
    for (Sprite& d : distractors) {
      d.cx += d.vx + walk(d);
      d.cy += d.vy + walk(d);
      bounce(d, W, H);
    }
  }
  return sample;
}

void write_sequence(const SequenceSample& sample, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "frames");
  const std::string ext = frame_extension();
  for (std::size_t t = 0; t < sample.frames_u8.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu", t + 1);
    write_image(sample.frames_u8[t], (fs::path(dir) / "frames" / (std::string(name) + ext)).string());
  }
  std::ofstream csv(fs::path(dir) / "boxes.csv");
  if (!csv) throw std::runtime_error("write_sequence: cannot open boxes.csv under " + dir);
  csv << "frame,x,y,w,h\n";
  csv.precision(17);
  for (std::size_t t = 0; t < sample.gt_boxes.size(); ++t) {
    const BoundingBox& b = sample.gt_boxes[t];
    csv << (t + 1) << "," << b.x << "," << b.y << "," << b.w << "," << b.h << "\n";
  }
  if (!csv) throw std::runtime_error("write_sequence: write failed under " + dir);
}

void write_synth_dataset(const SceneConfig& config, const std::string& out_dir, std::uint64_t seed,
                         std::size_t count) {
  fs::create_directories(out_dir);
  std::ofstream manifest(fs::path(out_dir) / "manifest.txt");
  if (!manifest) throw std::runtime_error("write_synth_dataset: cannot open manifest under " + out_dir);
  for (std::size_t i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "seq_%06zu", i);
    SequenceSample sample = generate_sequence(config, Rng::mix(seed, i));
    write_sequence(sample, (fs::path(out_dir) / name).string());
    manifest << name << "\n";
  }
  if (!manifest) throw std::runtime_error("write_synth_dataset: manifest write failed");
}

std::size_t curriculum_window_start(std::size_t sample_len, std::size_t length,
                                    std::uint64_t seed) {
  if (length > sample_len) {
    throw std::invalid_argument("curriculum_window: window of " + std::to_string(length) +
                                " frames exceeds sequence of " + std::to_string(sample_len));
  }
  if (length == sample_len) return 0;
  Rng rng(Rng::mix(seed, 0x817d0));
  return static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(sample_len - length)));
}

namespace {

class WindowSequence final : public Sequence {
 public:
  WindowSequence(SequencePtr parent, std::size_t start, std::size_t length)
      : parent_(std::move(parent)), start_(start) {
    const auto& pb = parent_->boxes();
    boxes_.assign(pb.begin() + static_cast<std::ptrdiff_t>(start),
                  pb.begin() + static_cast<std::ptrdiff_t>(start + length));
    id_ = parent_->id() + "[" + std::to_string(start) + ":" + std::to_string(start + length) + "]";
  }
  std::size_t length() const override { return boxes_.size(); }
  const std::vector<BoundingBox>& boxes() const override { return boxes_; }
  Tensor frame(std::size_t t) const override { return parent_->frame(start_ + t); }
  const std::string& id() const override { return id_; }

 private:
  SequencePtr parent_;
  std::size_t start_;
  std::vector<BoundingBox> boxes_;
  std::string id_;
};

}  // namespace

SequencePtr curriculum_window(const SequencePtr& sample, std::size_t length, std::uint64_t seed) {
  const std::size_t start = curriculum_window_start(sample->length(), length, seed);
  return std::make_shared<WindowSequence>(sample, start, length);
}

}  // namespace hart
