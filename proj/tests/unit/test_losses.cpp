#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <hart/grad_check.hpp>
#include <hart/losses.hpp>
#include <hart/ops.hpp>

#include "test_util.hpp"

using namespace hart;
using hart_test::random_tensor;

namespace {

// Independent IoU oracle: overlay a fine grid on the joint bounding box and
// count cell centers inside each box.
double iou_rasterized(const BoundingBox& a, const BoundingBox& b, std::size_t grid = 1024) {
  const double x0 = std::min(a.x, b.x), x1 = std::max(a.x + a.w, b.x + b.w);
  const double y0 = std::min(a.y, b.y), y1 = std::max(a.y + a.h, b.y + b.h);
  const double cw = (x1 - x0) / static_cast<double>(grid);
  const double ch = (y1 - y0) / static_cast<double>(grid);
  std::size_t in_a = 0, in_b = 0, in_both = 0;
  for (std::size_t gy = 0; gy < grid; ++gy) {
    const double cy = y0 + (static_cast<double>(gy) + 0.5) * ch;
    const bool ay = cy >= a.y && cy < a.y + a.h;
    const bool by = cy >= b.y && cy < b.y + b.h;
    if (!ay && !by) continue;
    for (std::size_t gx = 0; gx < grid; ++gx) {
      const double cx = x0 + (static_cast<double>(gx) + 0.5) * cw;
      const bool ina = ay && cx >= a.x && cx < a.x + a.w;
      const bool inb = by && cx >= b.x && cx < b.x + b.w;
      in_a += ina;
      in_b += inb;
      in_both += ina && inb;
    }
  }
  const std::size_t uni = in_a + in_b - in_both;
  return uni == 0 ? 0.0 : static_cast<double>(in_both) / static_cast<double>(uni);
}

double iou_value(const BoundingBox& a, const BoundingBox& b) {
  return iou_tensor(box_constant(a), box_constant(b)).item();
}

}  // namespace

TEST_CASE("iou basics") {
  BoundingBox a{0.0, 0.0, 2.0, 2.0};
  CHECK(iou_value(a, a) == doctest::Approx(1.0));
  CHECK(iou(a, a) == doctest::Approx(1.0));
  BoundingBox far{5.0, 5.0, 1.0, 1.0};
  CHECK(iou_value(a, far) == 0.0);
  CHECK(iou(a, far) == 0.0);
  BoundingBox shifted{1.0, 1.0, 2.0, 2.0};
  CHECK(iou_value(a, shifted) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(iou_rasterized(a, shifted) == doctest::Approx(1.0 / 7.0).epsilon(2e-3));
}

TEST_CASE("iou is symmetric, bounded and scale invariant") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    BoundingBox a{rng.uniform(-10, 30), rng.uniform(-10, 30), rng.uniform(1, 20), rng.uniform(1, 20)};
    BoundingBox b{rng.uniform(-10, 30), rng.uniform(-10, 30), rng.uniform(1, 20), rng.uniform(1, 20)};
    const double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    const double k = rng.uniform(0.5, 3.0);
    BoundingBox ka{k * a.x, k * a.y, k * a.w, k * a.h};
    BoundingBox kb{k * b.x, k * b.y, k * b.w, k * b.h};
    CHECK(iou(ka, kb) == doctest::Approx(ab).epsilon(1e-12));
    CHECK(iou_value(a, b) == doctest::Approx(ab).epsilon(1e-12));
  }
}

TEST_CASE("iou gradient passes finite differences away from kinks") {
  Rng rng(2);
  Tensor fixed = Tensor::from({4}, {2.0, 2.0, 6.0, 5.0});
  auto f = [&](const Tensor& box) { return iou_tensor(box, fixed); };
  // overlapping, interior configuration
  CHECK(finite_diff_error(f, Tensor::from({4}, {4.0, 3.0, 5.0, 6.0})) < 1e-6);
}

TEST_CASE("tracking loss values") {
  const double eps = 1e-4;
  std::vector<BoundingBox> truth = {{0, 0, 4, 4}, {1, 1, 4, 4}};

  SUBCASE("perfect prediction gives zero") {
    std::vector<Tensor> pred = {box_constant(truth[0]), box_constant(truth[1])};
    CHECK(tracking_loss(pred, truth, eps).item() == doctest::Approx(0.0));
  }
  SUBCASE("per-step IoU of 1/e gives 1") {
    const double e = std::exp(1.0);
    std::vector<BoundingBox> t2 = {{0, 0, 1, 1}, {0, 0, 1, 1}};
    std::vector<Tensor> pred = {box_constant({0, 0, e, 1}), box_constant({0, 0, e, 1})};
    CHECK(tracking_loss(pred, t2, eps).item() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("disjoint boxes hit the clip floor") {
    std::vector<BoundingBox> t1 = {{0, 0, 2, 2}};
    std::vector<Tensor> pred = {box_constant({50, 50, 1, 1})};
    CHECK(tracking_loss(pred, t1, eps).item() == doctest::Approx(-std::log(eps)).epsilon(1e-12));
    CHECK(tracking_loss(pred, t1, eps).item() == doctest::Approx(9.2103).epsilon(1e-4));
  }
}

TEST_CASE("spatial attention loss values") {
  const double eps = 1e-4;
  const BoundingBox image{0, 0, 100, 100};

  SUBCASE("covering attention at half-image size") {
    // attention covers the target and has IoU 0.5 with the frame
    std::vector<Tensor> att = {attention_box_tensor(Tensor::from({4}, {25.0, 50.0, 50.0, 100.0}))};
    std::vector<BoundingBox> truth = {{10.0, 40.0, 20.0, 20.0}};
    const double expected = -std::log(1.0 - eps) - std::log(0.5);
    CHECK(spatial_attention_loss(att, truth, image, eps).item() ==
          doctest::Approx(expected).epsilon(1e-12));
    CHECK(spatial_attention_loss(att, truth, image, eps).item() ==
          doctest::Approx(0.6931).epsilon(1e-3));
  }
  SUBCASE("attention equal to the whole image floors the second term") {
    std::vector<Tensor> att = {attention_box_tensor(Tensor::from({4}, {50.0, 50.0, 100.0, 100.0}))};
    std::vector<BoundingBox> truth = {{40.0, 40.0, 20.0, 20.0}};
    const double expected = -std::log(1.0 - eps) - std::log(eps);
    CHECK(spatial_attention_loss(att, truth, image, eps).item() ==
          doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("attention missing the target floors the first term") {
    std::vector<Tensor> att = {attention_box_tensor(Tensor::from({4}, {10.0, 10.0, 10.0, 10.0}))};
    std::vector<BoundingBox> truth = {{60.0, 60.0, 10.0, 10.0}};
    const double t2 = 1.0 - iou(BoundingBox{5, 5, 10, 10}, image);
    const double expected = -std::log(eps) - std::log(t2);
    CHECK(spatial_attention_loss(att, truth, image, eps).item() ==
          doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("target mask rasterization") {
  AttentionParams att;
  att.center_x = 10.0;
  att.center_y = 10.0;
  att.span_x = 8.0;
  att.span_y = 8.0;

  SUBCASE("box covering the window gives all ones") {
    Tensor m = target_mask(att, {0.0, 0.0, 30.0, 30.0}, 14, 14);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.at(i) == 1.0);
  }
  SUBCASE("disjoint box gives all zeros") {
    Tensor m = target_mask(att, {100.0, 100.0, 5.0, 5.0}, 14, 14);
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(m.at(i) == 0.0);
  }
  SUBCASE("box covering the left half fills the left 7 columns") {
    // window is [6, 14) x [6, 14); left half is x in [6, 10)
    Tensor m = target_mask(att, {6.0, 6.0, 4.0, 8.0}, 14, 14);
    for (std::size_t r = 0; r < 14; ++r)
      for (std::size_t c = 0; c < 14; ++c) CHECK(m.at(r, c) == (c < 7 ? 1.0 : 0.0));
  }
}

TEST_CASE("appearance loss values and gradient") {
  const double eps = 1e-4;

  SUBCASE("uniform 0.5 map costs ln 2 per cell") {
    Tensor s = Tensor::full({3, 3}, 0.5);
    Tensor m = Tensor::from({3, 3}, {1, 0, 1, 0, 1, 0, 1, 0, 1});
    CHECK(appearance_loss({s}, {m}, eps).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("a map equal to the clipped mask is almost free") {
    Tensor m = Tensor::from({2, 2}, {1, 0, 0, 1});
    Tensor s = Tensor::from({2, 2}, {1, 0, 0, 1});
    CHECK(appearance_loss({s}, {m}, eps).item() ==
          doctest::Approx(-std::log(1.0 - eps)).epsilon(1e-9));
  }
  SUBCASE("gradient w.r.t. the map passes finite differences") {
    Rng rng(3);
    Tensor m = Tensor::from({2, 3}, {1, 0, 1, 1, 0, 0});
    auto f = [&](const Tensor& s) { return appearance_loss({s}, {m}, eps); };
    CHECK(finite_diff_error(f, random_tensor({2, 3}, rng, 0.05, 0.95)) < 1e-6);
  }
}

TEST_CASE("l2 regularizer") {
  SUBCASE("all zeros") {
    CHECK(l2_regularizer({Tensor::zeros({3})}, {Tensor::zeros({4})}).item() == 0.0);
  }
  SUBCASE("single parameter of value 3") {
    CHECK(l2_regularizer({Tensor::scalar(3.0)}, {}).item() == doctest::Approx(4.5));
  }
  SUBCASE("opposite banks cancel in the mean") {
    Tensor v = Tensor::from({3}, {1.0, -2.0, 0.5});
    Tensor neg_v = neg(v);
    Tensor theta = Tensor::scalar(2.0);
    CHECK(l2_regularizer({theta}, {v, neg_v}).item() == doctest::Approx(2.0));  // 0.5*4
  }
}

TEST_CASE("adaptive weights and their regularizer") {
  AdaptiveWeights w;
  SUBCASE("unit weights at initialization give zero") {
    CHECK(w.lambda_value(0) == 1.0);
    CHECK(w.lambda_value(1) == 1.0);
    CHECK(w.lambda_value(2) == 1.0);
    CHECK(adaptive_regularizer(w).item() == 0.0);
  }
  SUBCASE("lambda = (e,1,1) gives -1") {
    w.eta.at(0) = 1.0;
    CHECK(adaptive_regularizer(w).item() == doctest::Approx(-1.0));
  }
  SUBCASE("gradient w.r.t. every eta is -1") {
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(adaptive_regularizer(w));
    }
    for (double g : w.eta.grad()) CHECK(g == doctest::Approx(-1.0));
  }
  SUBCASE("weights stay positive however eta moves") {
    w.eta.at(0) = -30.0;
    w.eta.at(1) = 30.0;
    CHECK(w.lambda_value(0) > 0.0);
    CHECK(w.lambda_value(1) > 0.0);
  }
}

TEST_CASE("adaptive weights equilibrate to the inverse loss magnitude") {
  // minimize lambda*x + R(lambda) over eta by gradient descent, fixed x
  const double x = 4.0;
  AdaptiveWeights w;
  for (int it = 0; it < 4000; ++it) {
    w.eta.zero_grad();
    Tape tape;
    {
      TapeScope scope(tape);
      Tensor loss = add(mul(w.lambda(0), Tensor::scalar(x)), adaptive_regularizer(w, 1));
      tape.backward(loss);
    }
    w.eta.at(0) -= 0.01 * w.eta.grad()[0];
  }
  CHECK(w.lambda_value(0) == doctest::Approx(1.0 / x).epsilon(1e-6));
}

namespace {

struct TinyRun {
  ModelConfig cfg;
  std::unique_ptr<HartModel> model;
  std::vector<Tensor> frames;
  std::vector<BoundingBox> truth;
  BoundingBox image_box{0.0, 0.0, 24.0, 24.0};

  explicit TinyRun(std::uint64_t seed) {
    cfg.glimpse_h = cfg.glimpse_w = 8;
    cfg.lstm_units = 10;
    cfg.app_dim = 6;
    cfg.feature_dim = 10;
    cfg.fuse_hidden = 12;
    cfg.gen_hidden = 6;
    cfg.decoder_hidden = 12;
    cfg.init_seed = seed;
    model = std::make_unique<HartModel>(cfg);
    Rng rng(seed + 100);
    for (int t = 0; t < 3; ++t) frames.push_back(random_tensor({24, 24, 3}, rng, 0.0, 1.0));
    truth = {{7.0, 7.0, 8.0, 8.0}, {7.5, 7.4, 8.0, 8.0}, {8.1, 7.9, 8.0, 8.0}};
  }

  LossBreakdown run(const LossConfig& lcfg, const AdaptiveWeights& w) const {
    RunContext ctx;
    ctx.mode = lcfg.mode;
    Trajectory traj = model->track_sequence(frames, truth.front(), ctx);
    return total_loss(traj, truth, image_box, model->map_h(), model->map_w(),
                      model->parameters(), lcfg, w);
  }
};

}  // namespace

TEST_CASE("total loss satisfies the breakdown identity") {
  TinyRun t(31);
  LossConfig lcfg;
  AdaptiveWeights w;
  w.eta.at(0) = 0.2;
  w.eta.at(1) = -0.3;
  w.eta.at(2) = 0.1;
  LossBreakdown bd = t.run(lcfg, w);
  const double reconstructed = bd.lambda_t * bd.l_track + bd.lambda_s * bd.l_spatial +
                               bd.lambda_a * bd.l_appearance + bd.r_lambda + lcfg.beta * bd.r_l2;
  CHECK(bd.total == doctest::Approx(reconstructed).epsilon(1e-12));
  CHECK(bd.l_track >= 0.0);
  CHECK(bd.l_spatial >= 0.0);
  CHECK(bd.l_appearance >= 0.0);
  CHECK(bd.r_l2 >= 0.0);
  CHECK(std::isfinite(bd.total));
}

TEST_CASE("doubling lambda_t doubles its contribution and shifts r_lambda by -ln 2") {
  TinyRun t(32);
  LossConfig lcfg;
  AdaptiveWeights w1, w2;
  w2.eta.at(0) = std::log(2.0);
  LossBreakdown a = t.run(lcfg, w1);
  LossBreakdown b = t.run(lcfg, w2);
  CHECK(b.lambda_t * b.l_track == doctest::Approx(2.0 * a.lambda_t * a.l_track).epsilon(1e-12));
  CHECK(b.r_lambda - a.r_lambda == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("ablation modes include and exclude the appearance term") {
  TinyRun t(33);
  AdaptiveWeights w;
  LossConfig full;
  full.mode = LossMode::kFullHart;
  LossConfig no_loss;
  no_loss.mode = LossMode::kAppAttNoLoss;
  LossConfig spatial;
  spatial.mode = LossMode::kSpatialAttOnly;

  LossBreakdown bd_full = t.run(full, w);
  CHECK(bd_full.l_appearance > 0.0);
  LossBreakdown bd_nl = t.run(no_loss, w);
  CHECK(bd_nl.l_appearance == 0.0);
  LossBreakdown bd_sp = t.run(spatial, w);
  CHECK(bd_sp.l_appearance == 0.0);
  // the dorsal stream is not regularized when it is not trained
  CHECK(bd_sp.r_l2 < bd_nl.r_l2);
}

TEST_CASE("loss magnitude is invariant to sequence length for identical steps") {
  const double eps = 1e-4;
  std::vector<BoundingBox> truth_short = {{0, 0, 4, 4}, {0, 0, 4, 4}};
  std::vector<BoundingBox> truth_long(6, BoundingBox{0, 0, 4, 4});
  std::vector<Tensor> pred_short(2, box_constant({1, 1, 4, 4}));
  std::vector<Tensor> pred_long(6, box_constant({1, 1, 4, 4}));
  CHECK(tracking_loss(pred_short, truth_short, eps).item() ==
        doctest::Approx(tracking_loss(pred_long, truth_long, eps).item()).epsilon(1e-12));
}

TEST_CASE("gradient of the total loss matches finite differences on 20 parameters") {
  TinyRun t(34);
  LossConfig lcfg;
  AdaptiveWeights w;
  w.eta.at(0) = 0.1;
  ParamList params = t.model->parameters();
  params.push_back({"eta", w.eta});

  for (NamedParam& p : params) {
    Tensor v = p.value;
    v.zero_grad();
  }
  Tape tape;
  {
    TapeScope scope(tape);
    RunContext ctx;
    Trajectory traj = t.model->track_sequence(t.frames, t.truth.front(), ctx);
    LossBreakdown bd = total_loss(traj, t.truth, t.image_box, t.model->map_h(), t.model->map_w(),
                                  t.model->parameters(), lcfg, w);
    tape.backward(bd.total_tensor);
  }

  auto loss_value = [&]() {
    RunContext ctx;
    Trajectory traj = t.model->track_sequence(t.frames, t.truth.front(), ctx);
    return total_loss(traj, t.truth, t.image_box, t.model->map_h(), t.model->map_w(),
                      t.model->parameters(), lcfg, w)
        .total;
  };

  Rng pick(35);
  const double h = 1e-5;
  for (int probe = 0; probe < 20; ++probe) {
    NamedParam& p = params[static_cast<std::size_t>(
        pick.uniform_int(0, static_cast<int>(params.size()) - 1))];
    Tensor v = p.value;
    const std::size_t idx =
        static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(v.size()) - 1));
    const double saved = v.at(idx);
    v.at(idx) = saved + h;
    const double fp = loss_value();
    v.at(idx) = saved - h;
    const double fm = loss_value();
    v.at(idx) = saved;
    const double numeric = (fp - fm) / (2.0 * h);
    const double analytic = v.grad()[idx];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    INFO(p.name << "[" << idx << "]");
    CHECK(std::abs(analytic - numeric) / denom < 1e-4);
  }
}

TEST_CASE("random box pairs agree with the rasterized pixel-count oracle") {
  Rng rng(36);
  for (int trial = 0; trial < 60; ++trial) {
    BoundingBox a{rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(4, 30), rng.uniform(4, 30)};
    BoundingBox b{rng.uniform(0, 40), rng.uniform(0, 40), rng.uniform(4, 30), rng.uniform(4, 30)};
    CHECK(std::abs(iou(a, b) - iou_rasterized(a, b)) < 2e-3);
  }
}
