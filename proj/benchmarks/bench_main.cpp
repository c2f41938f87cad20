#include "dcc/augment.hpp"
#include "dcc/losses.hpp"
#include "dcc/model.hpp"
#include "dcc/synth.hpp"
#include "dcc/training.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace dcc;

namespace {

std::vector<ModalityBundle> bundles(int n, const ModelConfig& cfg) {
  SynthConfig sc;
  sc.n_performances = n;
  sc.n_views = 1;
  sc.n_frames = cfg.frames;
  const auto ds = synth_generate(sc);
  std::vector<ModalityBundle> out;
  for (const auto& s : ds.sequences) {
    out.push_back(make_bundle(prepare_eval(s, ds.topology, cfg.frames).coords, ds.topology));
  }
  return out;
}

ProjectedFeatures<float> random_features(int n, int d) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> g(0.0f, 1.0f);
  auto mat = [&] {
    MatrixF m(n, d);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  ProjectedFeatures<float> p;
  for (auto kind : {StreamKind::temporal, StreamKind::spatial}) {
    StreamProjections<float> s;
    s.kind = kind;
    for (int k = 0; k < 3; ++k) {
      s.unimodal.push_back(mat());
      s.decomposed.push_back(mat());
    }
    s.composed = mat();
    s.fused = mat();
    p.streams.push_back(std::move(s));
  }
  return p;
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
  const auto cfg = ModelConfig::desk();
  const Model model(cfg, 1);
  const auto batch = bundles(static_cast<int>(state.range(0)), cfg);
  for (auto _ : state) {
    auto out = model.forward_batch(batch);
    benchmark::DoNotOptimize(out);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64);

static void BM_ForwardBackward(benchmark::State& state) {
  const auto cfg = ModelConfig::desk();
  Model model(cfg, 1);
  const auto batch = bundles(static_cast<int>(state.range(0)), cfg);
  for (auto _ : state) {
    const auto a = model.forward_batch(batch);
    std::vector<std::pair<ag::Var, MatrixF>> seeds;
    pair_loss(a.projections, a.projections, LossConfig{}, &seeds);
    model.parameters().zero_grad();
    ag::backward(std::span<const std::pair<ag::Var, MatrixF>>(seeds));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(16)->Arg(64);

static void BM_TotalLoss(benchmark::State& state) {
  const auto p = random_features(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  auto grad = p.zeros_like();
  for (auto _ : state) {
    auto g = grad;
    benchmark::DoNotOptimize(total_loss<float>(p, LossConfig{}, &g));
  }
}
BENCHMARK(BM_TotalLoss)->Args({64, 64})->Args({512, 1024});

static void BM_Augment(benchmark::State& state) {
  SynthConfig sc;
  sc.n_performances = 1;
  sc.n_frames = 64;
  sc.n_joints = 25;
  const auto ds = synth_generate(sc);
  AugmentationConfig cfg;
  cfg.frames_out = 64;
  Rng rng(1);
  for (auto _ : state) {
    auto s = prepare_train(ds.sequences[0], ds.topology, cfg, rng);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_Augment);

BENCHMARK_MAIN();
