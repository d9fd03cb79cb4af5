#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <hart/dataset.hpp>
#include <hart/rng.hpp>
#include <hart/synth.hpp>
#include <set>

using namespace hart;
namespace fs = std::filesystem;

namespace {

SceneConfig small_scene() {
  SceneConfig cfg;
  cfg.height = 48;
  cfg.width = 48;
  cfg.sprite_min = 10.0;
  cfg.sprite_max = 14.0;
  cfg.distractors = 2;
  cfg.length = 8;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("generation is bit-identical for the same seed") {
  SceneConfig cfg = small_scene();
  SequenceSample a = generate_sequence(cfg, 123);
  SequenceSample b = generate_sequence(cfg, 123);
  REQUIRE(a.frames_u8.size() == b.frames_u8.size());
  for (std::size_t t = 0; t < a.frames_u8.size(); ++t) {
    CHECK(std::memcmp(a.frames_u8[t].pixels.data(), b.frames_u8[t].pixels.data(),
                      a.frames_u8[t].pixels.size()) == 0);
    CHECK(a.gt_boxes[t].x == b.gt_boxes[t].x);
    CHECK(a.gt_boxes[t].y == b.gt_boxes[t].y);
  }
  SequenceSample c = generate_sequence(cfg, 124);
  CHECK(std::memcmp(a.frames_u8[0].pixels.data(), c.frames_u8[0].pixels.data(),
                    a.frames_u8[0].pixels.size()) != 0);
}

TEST_CASE("zero velocity and zero drift freeze the scene") {
  SceneConfig cfg = small_scene();
  cfg.vel_min = cfg.vel_max = 0.0;
  cfg.drift_rate = 0.0;
  cfg.occluder_prob = 0.0;
  SequenceSample s = generate_sequence(cfg, 5);
  for (std::size_t t = 1; t < s.gt_boxes.size(); ++t) {
    CHECK(s.gt_boxes[t].x == s.gt_boxes[0].x);
    CHECK(s.gt_boxes[t].y == s.gt_boxes[0].y);
    CHECK(s.gt_boxes[t].w == s.gt_boxes[0].w);
    CHECK(s.gt_boxes[t].h == s.gt_boxes[0].h);
  }
}

TEST_CASE("ground-truth box contains at least 80% of the sprite mask") {
  SceneConfig cfg = small_scene();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SequenceSample s = generate_sequence(cfg, seed);
    for (std::size_t t = 0; t < s.length(); ++t) {
      const BoundingBox& b = s.gt_boxes[t];
      std::size_t total = 0, inside = 0;
      for (std::size_t y = 0; y < cfg.height; ++y)
        for (std::size_t x = 0; x < cfg.width; ++x) {
          if (!s.target_alpha[t][y * cfg.width + x]) continue;
          ++total;
          const double px = static_cast<double>(x) + 0.5;
          const double py = static_cast<double>(y) + 0.5;
          if (px >= b.x && px <= b.x + b.w && py >= b.y && py <= b.y + b.h) ++inside;
        }
      REQUIRE(total > 0);
      CHECK(static_cast<double>(inside) / static_cast<double>(total) >= 0.8);
    }
  }
}

TEST_CASE("declared box is consistent with the rendered sprite in unoccluded frames") {
  SceneConfig cfg = small_scene();
  cfg.occluder_prob = 0.0;
  for (std::uint64_t seed = 20; seed < 26; ++seed) {
    SequenceSample s = generate_sequence(cfg, seed);
    for (std::size_t t = 0; t < s.length(); ++t) {
      // tight box of the rendered mask
      double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
      for (std::size_t y = 0; y < cfg.height; ++y)
        for (std::size_t x = 0; x < cfg.width; ++x) {
          if (!s.target_alpha[t][y * cfg.width + x]) continue;
          x0 = std::min(x0, static_cast<double>(x));
          y0 = std::min(y0, static_cast<double>(y));
          x1 = std::max(x1, static_cast<double>(x) + 1.0);
          y1 = std::max(y1, static_cast<double>(y) + 1.0);
        }
      const BoundingBox tight{x0, y0, x1 - x0, y1 - y0};
      CHECK(iou(s.gt_boxes[t], tight) >= 0.8);
    }
  }
}

TEST_CASE("frames convert to tensors in [0,1]") {
  SequenceSample s = generate_sequence(small_scene(), 7);
  Tensor f = s.frame(0);
  REQUIRE(f.shape() == Shape{48, 48, 3});
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(f.at(i) >= 0.0);
    CHECK(f.at(i) <= 1.0);
  }
}

TEST_CASE("dataset write + load round trip preserves frames and boxes") {
  TempDir tmp("hart_ds_roundtrip");
  SceneConfig cfg = small_scene();
  write_synth_dataset(cfg, tmp.path.string(), 42, 3);

  std::vector<SequencePtr> ds = load_dataset((tmp.path / "manifest.txt").string());
  REQUIRE(ds.size() == 3);
  // manifest order defines iteration order
  CHECK(ds[0]->id() == "seq_000000");
  CHECK(ds[1]->id() == "seq_000001");
  CHECK(ds[2]->id() == "seq_000002");

  for (std::size_t i = 0; i < 3; ++i) {
    SequenceSample expect = generate_sequence(cfg, hart::Rng::mix(42, i));
    REQUIRE(ds[i]->length() == expect.length());
    for (std::size_t t = 0; t < expect.length(); ++t) {
      Tensor a = ds[i]->frame(t);
      Tensor b = expect.frame(t);
      REQUIRE(a.size() == b.size());
      CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
      CHECK(ds[i]->boxes()[t].x == expect.gt_boxes[t].x);
      CHECK(ds[i]->boxes()[t].w == expect.gt_boxes[t].w);
    }
  }
}

TEST_CASE("loader rejects malformed datasets with precise errors") {
  TempDir tmp("hart_ds_errors");
  SceneConfig cfg = small_scene();
  cfg.length = 3;
  SequenceSample s = generate_sequence(cfg, 1);
  write_sequence(s, (tmp.path / "seq_a").string());

  SUBCASE("non-positive box size cites the row") {
    std::ofstream csv(tmp.path / "seq_a" / "boxes.csv");
    csv << "frame,x,y,w,h\n1,1,1,4,4\n2,1,1,0,4\n3,1,1,4,4\n";
    csv.close();
    try {
      load_sequence_dir((tmp.path / "seq_a").string());
      FAIL("expected error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("row 3") != std::string::npos);
    }
  }
  SUBCASE("missing frame file is named") {
    fs::remove(tmp.path / "seq_a" / "frames" / ("000002" + frame_extension()));
    try {
      load_sequence_dir((tmp.path / "seq_a").string());
      FAIL("expected error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("000002") != std::string::npos);
    }
  }
  SUBCASE("frame/box count mismatch is reported") {
    std::ofstream csv(tmp.path / "seq_a" / "boxes.csv");
    csv << "frame,x,y,w,h\n1,1,1,4,4\n2,1,1,4,4\n";
    csv.close();
    CHECK_THROWS_AS(load_sequence_dir((tmp.path / "seq_a").string()), std::runtime_error);
  }
  SUBCASE("missing manifest") {
    CHECK_THROWS_AS(load_dataset((tmp.path / "nope.txt").string()), std::runtime_error);
  }
}

TEST_CASE("curriculum windows") {
  SceneConfig cfg = small_scene();
  cfg.length = 20;
  auto sample = std::make_shared<SequenceSample>(generate_sequence(cfg, 3));
  SequencePtr base = sample;

  SUBCASE("full-length window is the identity") {
    SequencePtr w = curriculum_window(base, 20, 9);
    CHECK(w->length() == 20);
    CHECK(w->boxes().front().x == sample->gt_boxes.front().x);
    Tensor a = w->frame(5);
    Tensor b = sample->frame(5);
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }
  SUBCASE("window start is seeded and reproducible") {
    const std::size_t s1 = curriculum_window_start(20, 5, 1234);
    const std::size_t s2 = curriculum_window_start(20, 5, 1234);
    CHECK(s1 == s2);
    SequencePtr w = curriculum_window(base, 5, 1234);
    CHECK(w->length() == 5);
    CHECK(w->boxes().front().x == sample->gt_boxes[s1].x);  // b_1 is the window start box
  }
  SUBCASE("every start is reachable across seeds") {
    std::set<std::size_t> seen;
    for (std::uint64_t seed = 0; seed < 10000; ++seed) seen.insert(curriculum_window_start(20, 5, seed));
    CHECK(seen.size() == 16);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 15);
  }
  SUBCASE("window longer than the sample is an error") {
    CHECK_THROWS_AS(curriculum_window(base, 21, 0), std::invalid_argument);
  }
}

TEST_CASE("ppm round trip is exact") {
  TempDir tmp("hart_ppm_roundtrip");
  Image8 img = Image8::make(5, 7);
  hart::Rng rng(3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  const std::string path = (tmp.path / "img.ppm").string();
  write_image(img, path);
  Image8 back = read_image(path);
  REQUIRE(back.h == img.h);
  REQUIRE(back.w == img.w);
  CHECK(std::memcmp(back.pixels.data(), img.pixels.data(), img.pixels.size()) == 0);
}

TEST_CASE("distractors share the shape class but differ in color") {
  SceneConfig cfg = small_scene();
  cfg.occluder_prob = 0.0;
  SequenceSample s = generate_sequence(cfg, 11);
  REQUIRE(s.distractor_boxes.front().size() == 2);
  // distractor boxes are tracked per frame and finite
  for (std::size_t t = 0; t < s.length(); ++t)
    for (const BoundingBox& b : s.distractor_boxes[t]) CHECK(b.finite());
}
