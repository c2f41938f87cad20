#include "dcc/augment.hpp"
#include "dcc/errors.hpp"
#include "dcc/model.hpp"
#include "dcc/synth.hpp"

#include <doctest.h>

using namespace dcc;

namespace {

ModelConfig tiny(std::vector<Modality> mods = {Modality::joint, Modality::bone, Modality::motion}) {
  ModelConfig cfg;
  cfg.dim = 16;
  cfg.frames = 8;
  cfg.joints = 11;
  cfg.n_heads = 2;
  cfg.modalities = std::move(mods);
  return cfg;
}

std::vector<ModalityBundle> batch(int n, int frames) {
  SynthConfig sc;
  sc.n_performances = n;
  sc.n_views = 1;
  const auto ds = synth_generate(sc);
  std::vector<ModalityBundle> out;
  for (const auto& s : ds.sequences) out.push_back(make_bundle(prepare_eval(s, ds.topology, frames).coords, ds.topology));
  return out;
}

bool same(const MatrixF& a, const MatrixF& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a - b).cwiseAbs().maxCoeff() <= 1e-6f;
}

}  // namespace

TEST_CASE("forward shapes") {
  const Model model(tiny(), 1);
  const auto b = batch(3, 8);
  const auto out = model.forward_batch(b);
  const auto& r = out.representations;
  REQUIRE(r.temporal.size() == 3);
  CHECK(r.temporal[0].rows() == 3);
  CHECK(r.temporal[0].cols() == 16);
  CHECK(r.unified().cols() == 32);
  CHECK(r.global(Modality::bone).cols() == 32);
  const auto p = out.projections.values();
  CHECK(p.streams.size() == 2);
  CHECK(p.matrix_count() == 16);
  CHECK(model.config().n_tokens(StreamKind::temporal) == 8);
  CHECK(model.config().n_tokens(StreamKind::spatial) == 11);
}

TEST_CASE("global baseline has one stream of per-modality projections") {
  auto cfg = tiny();
  cfg.decomposition = DecompositionMode::global;
  const Model model(cfg, 1);
  const auto p = model.forward_batch(batch(2, 8)).projections.values();
  REQUIRE(p.streams.size() == 1);
  CHECK(p.streams[0].kind == StreamKind::global);
  CHECK(!p.streams[0].composed);
  CHECK(p.streams[0].unimodal.size() == 3);
  CHECK(p.streams[0].unimodal[0].cols() == 32);
}

TEST_CASE("encoders are shared across modality sets") {
  const Model one(tiny({Modality::joint}), 1);
  const Model three(tiny(), 1);
  CHECK(one.encoder_parameter_count() == three.encoder_parameter_count());
  CHECK(one.positional_parameter_count() == three.positional_parameter_count());
  CHECK(three.embedding_parameter_count() == 3 * one.embedding_parameter_count());
  CHECK(three.projector_parameter_count() > one.projector_parameter_count());
  CHECK(one.encoder_parameter_count() > 0);
}

TEST_CASE("singleton unified feature equals that modality's global feature") {
  const Model model(tiny(), 2);
  const auto b = batch(3, 8);
  const auto reps = model.forward_batch(b).representations;
  for (auto m : {Modality::joint, Modality::bone, Modality::motion}) {
    const std::vector<Modality> subset{m};
    CHECK(same(model.unified(b, subset).value(), reps.global(m).value()));
  }
  const std::vector<Modality> all{Modality::joint, Modality::bone, Modality::motion};
  CHECK(same(model.unified(b, all).value(), reps.unified().value()));
}

TEST_CASE("clones are independent and seeds are reproducible") {
  const Model a(tiny(), 3);
  const Model b(tiny(), 3);
  const Model c(tiny(), 4);
  const auto& pa = a.parameters().all();
  CHECK(pa[0].var.value() == b.parameters().all()[0].var.value());
  CHECK(!(pa[0].var.value() == c.parameters().all()[0].var.value()));

  Model copy = a.clone();
  auto node = copy.parameters().all()[0].var.node();
  node->value.setZero();
  CHECK(!(pa[0].var.value() == copy.parameters().all()[0].var.value()));
  CHECK(copy.parameters().all().size() == pa.size());
}

TEST_CASE("every parameter receives a gradient") {
  for (auto fusion : {FusionMode::average, FusionMode::linear}) {
    auto cfg = tiny();
    cfg.fusion = fusion;
    Model model(cfg, 5);
    const auto out = model.forward_batch(batch(3, 8));
    const auto values = out.projections.values();
    auto grad = values.zeros_like();
    total_loss<float>(values, LossConfig{}, &grad);
    std::vector<std::pair<ag::Var, MatrixF>> seeds;
    out.projections.append_seeds(grad, seeds);
    model.parameters().zero_grad();
    ag::backward(std::span<const std::pair<ag::Var, MatrixF>>(seeds));
    for (const auto& p : model.parameters().all()) {
      INFO(p.name);
      CHECK(p.var.grad().size() == p.var.value().size());
      CHECK(p.var.grad().cwiseAbs().maxCoeff() > 0.0f);
    }
  }
}

TEST_CASE("invalid configurations") {
  auto cfg = tiny();
  cfg.n_heads = 3;
  CHECK_THROWS_AS(Model(cfg, 0), ConfigError);
  cfg = tiny({});
  CHECK_THROWS_AS(Model(cfg, 0), ConfigError);
  const Model model(tiny(), 0);
  CHECK_THROWS(model.forward_batch(batch(2, 6)));
}
