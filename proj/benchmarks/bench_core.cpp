#include <benchmark/benchmark.h>

#include <hart/attention.hpp>
#include <hart/losses.hpp>
#include <hart/ops.hpp>
#include <hart/tracker.hpp>

using namespace hart;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), false);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = random_tensor({n, n}, rng);
  Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetComplexityN(static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128)->Complexity();

void BM_Conv2dForward(benchmark::State& state) {
  Rng rng(2);
  Tensor x = random_tensor({28, 28, 16}, rng);
  Tensor k = random_tensor({3, 3, 16, 32}, rng);
  for (auto _ : state) {
    Tensor y = conv2d(x, k, 1, Pad::kSame);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Conv2dForward);

void BM_Conv2dBackward(benchmark::State& state) {
  Rng rng(3);
  Tensor x = random_tensor({28, 28, 16}, rng);
  x.set_requires_grad(true);
  Tensor k = random_tensor({3, 3, 16, 32}, rng);
  k.set_requires_grad(true);
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = sum(conv2d(x, k, 1, Pad::kSame));
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.data());
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_GlimpseExtraction(benchmark::State& state) {
  Rng rng(4);
  SigmaPolynomial poly;
  Tensor image = random_tensor({96, 96, 3}, rng, 0.0, 1.0);
  Tensor att = Tensor::from({4}, {48.0, 48.0, 30.0, 30.0});
  for (auto _ : state) {
    Tensor g = extract_glimpse(image, att, 28, 28, poly);
    benchmark::DoNotOptimize(g.data());
  }
}
BENCHMARK(BM_GlimpseExtraction);

void BM_TrackerStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.glimpse_h = cfg.glimpse_w = 28;
  HartModel model(cfg);
  Rng rng(5);
  Tensor frame = random_tensor({96, 96, 3}, rng, 0.0, 1.0);
  RunContext ctx;
  TrackerState st = model.init_state(frame, {30.0, 30.0, 20.0, 20.0}, ctx);
  for (auto _ : state) {
    auto [next, out] = model.step(st, frame, ctx);
    benchmark::DoNotOptimize(out.bbox_value);
  }
}
BENCHMARK(BM_TrackerStep);

void BM_TrainStepT5(benchmark::State& state) {
  ModelConfig cfg;
  cfg.glimpse_h = cfg.glimpse_w = 28;
  HartModel model(cfg);
  Rng rng(6);
  std::vector<Tensor> frames;
  for (int t = 0; t < 5; ++t) frames.push_back(random_tensor({96, 96, 3}, rng, 0.0, 1.0));
  std::vector<BoundingBox> truth(5, BoundingBox{30.0, 30.0, 20.0, 20.0});
  LossConfig lcfg;
  AdaptiveWeights weights;
  ParamList params = model.parameters();
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    Rng step_rng(7);
    RunContext ctx{true, &step_rng, LossMode::kFullHart};
    Trajectory traj = model.track_sequence(frames, truth.front(), ctx);
    LossBreakdown bd = total_loss(traj, truth, {0, 0, 96, 96}, model.map_h(), model.map_w(),
                                  params, lcfg, weights);
    tape.backward(bd.total_tensor);
    benchmark::DoNotOptimize(bd.total);
  }
}
BENCHMARK(BM_TrainStepT5);

}  // namespace

BENCHMARK_MAIN();
