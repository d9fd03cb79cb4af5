#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <hart/appearance.hpp>
#include <hart/grad_check.hpp>
#include <hart/ops.hpp>

#include "test_util.hpp"

using namespace hart;
using hart_test::random_tensor;

namespace {

AppearanceConfig small_cfg(std::size_t glimpse = 8, std::size_t channels = 3) {
  AppearanceConfig cfg;
  cfg.v1 = V1Config::make(V1Preset::kSmall, glimpse, glimpse, channels, 0.25);
  cfg.app_dim = 8;
  cfg.gen_hidden = 8;
  cfg.fuse_hidden = 16;
  cfg.feature_dim = 12;
  return cfg;
}

Tensor find_param(const AppearanceAttention& app, const std::string& name) {
  ParamList params;
  app.collect(params, "");
  for (const NamedParam& p : params)
    if (p.name == name) return p.value;
  throw std::runtime_error("no param " + name);
}

}  // namespace

TEST_CASE("kitti-like V1 maps a 56x56x3 glimpse to 14x14x384") {
  AppearanceConfig cfg;
  cfg.v1 = V1Config::make(V1Preset::kKittiLike, 56, 56, 3, 0.25);
  Rng rng(1);
  AppearanceAttention app(cfg, rng);
  Tensor glimpse = random_tensor({56, 56, 3}, rng, 0.0, 1.0);
  Tensor out = app.v1_forward(glimpse, false, nullptr);
  CHECK(out.shape() == Shape{14, 14, 384});
}

TEST_CASE("small V1 maps a 28x28x1 glimpse to 7x7x32") {
  AppearanceConfig cfg;
  cfg.v1 = V1Config::make(V1Preset::kSmall, 28, 28, 1, 0.25);
  Rng rng(2);
  AppearanceAttention app(cfg, rng);
  Tensor glimpse = random_tensor({28, 28, 1}, rng, 0.0, 1.0);
  CHECK(app.v1_forward(glimpse, false, nullptr).shape() == Shape{7, 7, 32});
}

TEST_CASE("eval-mode V1 is deterministic, training dropout is not a no-op") {
  Rng rng(3);
  AppearanceAttention app(small_cfg(), rng);
  Tensor glimpse = random_tensor({8, 8, 3}, rng, 0.0, 1.0);
  Tensor a = app.v1_forward(glimpse, false, nullptr);
  Tensor b = app.v1_forward(glimpse, false, nullptr);
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);

  Rng d1(11), d2(12);
  Tensor t1 = app.v1_forward(glimpse, true, &d1);
  Tensor t2 = app.v1_forward(glimpse, true, &d2);
  CHECK(std::memcmp(t1.data(), t2.data(), t1.size() * sizeof(double)) != 0);
}

TEST_CASE("ventral stream preserves spatial dims, zero weights give zero maps") {
  Rng rng(4);
  AppearanceAttention app(small_cfg(), rng);
  Tensor feats = random_tensor({2, 2, 32}, rng);
  Tensor nu = app.ventral_forward(feats);
  CHECK(nu.shape() == Shape{2, 2, 5});

  Tensor k = find_param(app, "ventral/kernel");
  Tensor b = find_param(app, "ventral/bias");
  for (double& v : k.values()) v = 0.0;
  for (double& v : b.values()) v = 0.0;
  Tensor zero = app.ventral_forward(feats);
  for (std::size_t i = 0; i < zero.size(); ++i) CHECK(zero.at(i) == 0.0);
}

TEST_CASE("ventral weight gradient passes finite differences") {
  Rng rng(5);
  AppearanceAttention app(small_cfg(), rng);
  Tensor feats = random_tensor({2, 2, 32}, rng);
  Tensor probe = random_tensor({2, 2, 5}, rng);
  Tensor kernel = find_param(app, "ventral/kernel");
  // finite_diff_check perturbs the shared parameter tensor in place
  auto f = [&](const Tensor&) { return sum(mul(app.ventral_forward(feats), probe)); };
  CHECK(finite_diff_error(f, kernel) < 1e-5);
}

TEST_CASE("dorsal filter bank has the documented element count") {
  Rng rng(6);
  AppearanceConfig cfg = small_cfg();
  AppearanceAttention app(cfg, rng);
  const std::size_t cv = cfg.v1.out_c;
  Tensor appearance = random_tensor({8}, rng);
  FilterBank bank = app.dorsal_filters(appearance);
  const std::size_t expected = 1 * 1 * cv * 5 + 5 + 3 * 3 * 5 * 5 + 5;
  CHECK(bank.flat.size() == expected);
  CHECK(bank.k1.shape() == Shape{1, 1, cv, 5});
  CHECK(bank.b1.shape() == Shape{5});
  CHECK(bank.k2.shape() == Shape{3, 3, 5, 5});
  CHECK(bank.b2.shape() == Shape{5});
}

TEST_CASE("zero appearance vector yields the generator bias path") {
  Rng rng(7);
  AppearanceAttention app(small_cfg(), rng);
  FilterBank bank = app.dorsal_filters(Tensor::zeros({8}));
  Tensor gen_b2 = find_param(app, "dorsal/gen_b2");
  Tensor gen_w2 = find_param(app, "dorsal/gen_w2");
  Tensor gen_b1 = find_param(app, "dorsal/gen_b1");
  Tensor expect = add(matmul(gen_w2, tanh_op(gen_b1)), gen_b2);
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(bank.flat.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-14));
}

TEST_CASE("distinct appearance vectors produce distinct banks") {
  Rng rng(8);
  AppearanceAttention app(small_cfg(), rng);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor a1 = random_tensor({8}, rng);
    Tensor a2 = random_tensor({8}, rng);
    FilterBank b1 = app.dorsal_filters(a1);
    FilterBank b2 = app.dorsal_filters(a2);
    CHECK(std::memcmp(b1.flat.data(), b2.flat.data(), b1.flat.size() * sizeof(double)) != 0);
  }
}

TEST_CASE("location map lies strictly inside (0,1) with V1 spatial dims") {
  Rng rng(9);
  AppearanceAttention app(small_cfg(), rng);
  Tensor feats = random_tensor({2, 2, 32}, rng);
  FilterBank bank = app.dorsal_filters(random_tensor({8}, rng));
  Tensor smap = app.dorsal_forward(feats, bank);
  REQUIRE(smap.shape() == Shape{2, 2});
  for (std::size_t i = 0; i < smap.size(); ++i) {
    CHECK(smap.at(i) > 0.0);
    CHECK(smap.at(i) < 1.0);
  }
}

TEST_CASE("gradient flows through the bank to the appearance vector") {
  Rng rng(10);
  AppearanceAttention app(small_cfg(), rng);
  Tensor feats = random_tensor({2, 2, 32}, rng);
  Tensor probe = random_tensor({2, 2}, rng);
  auto f = [&](const Tensor& a) {
    return sum(mul(app.dorsal_forward(feats, app.dorsal_filters(a)), probe));
  };
  CHECK(finite_diff_error(f, random_tensor({8}, rng)) < 1e-5);
}

TEST_CASE("fuse masks features before the perceptron") {
  Rng rng(11);
  AppearanceAttention app(small_cfg(), rng);
  Tensor nu = random_tensor({2, 2, 5}, rng);
  Tensor smap = random_tensor({2, 2}, rng, 0.1, 0.9);

  // mask applied inside vs applied by hand with a unit mask
  Tensor premasked = mul(nu, reshape(smap, {2, 2, 1}));
  Tensor ones = Tensor::full({2, 2}, 1.0);
  Tensor a = app.fuse(nu, smap);
  Tensor b = app.fuse(premasked, ones);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-14));

  // null mask leaves only the bias path
  Tensor zero_in = app.fuse(nu, Tensor::zeros({2, 2}));
  Tensor zero_feat = app.fuse(Tensor::zeros({2, 2, 5}), ones);
  for (std::size_t i = 0; i < zero_in.size(); ++i) CHECK(zero_in.at(i) == zero_feat.at(i));
}

TEST_CASE("output is invariant to features under a zeroed mask region") {
  Rng rng(12);
  AppearanceAttention app(small_cfg(), rng);
  Tensor smap = Tensor::from({2, 2}, {0.7, 0.0, 0.4, 0.9});
  Tensor nu = random_tensor({2, 2, 5}, rng);
  Tensor out1 = app.fuse(nu, smap);
  Tensor nu2 = nu.clone();
  for (std::size_t c = 0; c < 5; ++c) nu2.at(0, 1, c) += rng.uniform(1.0, 5.0);
  Tensor out2 = app.fuse(nu2, smap);
  for (std::size_t i = 0; i < out1.size(); ++i) CHECK(out1.at(i) == out2.at(i));
}

TEST_CASE("end-to-end gradient from v_t to glimpse pixels and appearance") {
  Rng rng(13);
  AppearanceAttention app(small_cfg(), rng);
  Tensor probe = random_tensor({12}, rng);
  Tensor appearance = random_tensor({8}, rng);
  Tensor glimpse = random_tensor({8, 8, 3}, rng, 0.0, 1.0);

  auto pipeline = [&](const Tensor& g, const Tensor& a) {
    Tensor feats = app.v1_forward(g, false, nullptr);
    Tensor nu = app.ventral_forward(feats);
    Tensor smap = app.dorsal_forward(feats, app.dorsal_filters(a));
    return sum(mul(app.fuse(nu, smap), probe));
  };
  auto f_glimpse = [&](const Tensor& g) { return pipeline(g, appearance); };
  auto f_app = [&](const Tensor& a) { return pipeline(glimpse, a); };
  CHECK(finite_diff_error(f_glimpse, glimpse) < 1e-4);
  CHECK(finite_diff_error(f_app, appearance) < 1e-4);
}

TEST_CASE("module is a pure function of inputs in eval mode") {
  Rng rng(14);
  AppearanceAttention app(small_cfg(), rng);
  Tensor glimpse = random_tensor({8, 8, 3}, rng, 0.0, 1.0);
  Tensor appearance = random_tensor({8}, rng);
  auto run = [&]() {
    Tensor feats = app.v1_forward(glimpse, false, nullptr);
    Tensor nu = app.ventral_forward(feats);
    Tensor smap = app.dorsal_forward(feats, app.dorsal_filters(appearance));
    return app.fuse(nu, smap);
  };
  Tensor a = run();
  Tensor b = run();
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("glimpse dims must match the configured input") {
  Rng rng(15);
  AppearanceAttention app(small_cfg(), rng);
  CHECK_THROWS_AS(app.v1_forward(Tensor::zeros({12, 12, 3}), false, nullptr),
                  std::invalid_argument);
  CHECK_THROWS_AS(app.dorsal_filters(Tensor::zeros({5})), std::invalid_argument);
}

TEST_CASE("dorsal parameter names are identifiable for the ablation") {
  Rng rng(16);
  AppearanceAttention app(small_cfg(), rng);
  ParamList params;
  app.collect(params, "appearance/");
  std::size_t dorsal = 0;
  for (const NamedParam& p : params)
    if (AppearanceAttention::is_dorsal_param(p.name)) ++dorsal;
  CHECK(dorsal == 6);  // generator w1,b1,w2,b2 + head kernel,bias
}
