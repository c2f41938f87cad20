#include "dcc/checkpoint.hpp"
#include "dcc/errors.hpp"
#include "dcc/synth.hpp"
#include "dcc/training.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace dcc;
namespace fs = std::filesystem;

namespace {

Dataset data() {
  SynthConfig sc;
  sc.n_performances = 12;
  sc.n_frames = 10;
  return synth_generate(sc);
}

TrainConfig small(int epochs = 3) {
  auto cfg = TrainConfig::desk();
  cfg.model.dim = 16;
  cfg.model.frames = 8;
  cfg.augmentation.frames_out = 8;
  cfg.batch_size = 4;
  cfg.max_epochs = epochs;
  cfg.drop_epoch = epochs;
  cfg.seed = 11;
  return cfg;
}

double max_difference(const Model& a, const Model& b) {
  double d = 0;
  const auto& pa = a.parameters().all();
  const auto& pb = b.parameters().all();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    d = std::max(d, static_cast<double>((pa[i].var.value() - pb[i].var.value()).cwiseAbs().maxCoeff()));
  }
  return d;
}

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("dcc_training_" + name); }

}  // namespace

TEST_CASE("learning-rate schedule") {
  const auto ntu = TrainConfig::full_scale_ntu();
  CHECK(lr_schedule(0, ntu) == 5e-4);
  CHECK(lr_schedule(349, ntu) == 5e-4);
  CHECK(lr_schedule(350, ntu) == 5e-5);
  CHECK(ntu.batch_size == 512);
  CHECK(ntu.weight_decay == 1e-5);
  CHECK(ntu.model.dim == 1024);
  CHECK(ntu.model.frames == 64);
  const auto pku = TrainConfig::full_scale_pku();
  CHECK(lr_schedule(799, pku) == 5e-4);
  CHECK(lr_schedule(800, pku) == 5e-5);
  CHECK(pku.max_epochs == 1000);
}

TEST_CASE("Adam matches a scalar reference") {
  ParameterStore store;
  MatrixF init(1, 2);
  init << 0.5f, -1.0f;
  auto p = store.add("w", init);
  Adam adam(store);
  double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {0.5, -1.0};
  const double lr = 0.1, wd = 0.01;
  for (int t = 1; t <= 5; ++t) {
    MatrixF g(1, 2);
    g << 0.3f * t, -0.2f;
    p.node()->grad = g;
    adam.step(store, lr, wd);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g(0, i);
      v[i] = 0.999 * v[i] + 0.001 * g(0, i) * g(0, i);
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      x[i] = x[i] * (1 - lr * wd) - lr * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p.value()(0, i) == doctest::Approx(x[i]).epsilon(1e-5));
    }
  }
  CHECK(adam.steps() == 5);

  // Parameters without a gradient are untouched.
  const MatrixF before = p.value();
  store.zero_grad();
  adam.step(store, lr, wd);
  CHECK(p.value() == before);
}

TEST_CASE("every step satisfies the loss identity and metrics agree") {
  auto cfg = small(2);
  cfg.loss.alpha = 0.6;
  cfg.loss.beta = 1.4;
  cfg.log_steps = true;
  const auto metrics = temp("metrics.jsonl");
  fs::remove(metrics);
  PretrainOptions opts;
  opts.metrics_path = metrics;
  const auto result = pretrain(data(), cfg, opts);
  REQUIRE(result.steps.size() == 6);
  for (const auto& s : result.steps) {
    const double want = 0.6 * s.loss.decomposition + 1.4 * s.loss.composition + s.loss.regularization;
    CHECK(std::abs(s.loss.total - want) <= 1e-6 * std::abs(want));
  }
  std::ifstream in(metrics);
  std::string line;
  int steps = 0, epochs = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const double want = j["alpha"].get<double>() * j["L_d"].get<double>() +
                        j["beta"].get<double>() * j["L_c"].get<double>() + j["L_reg"].get<double>();
    CHECK(std::abs(j["total"].get<double>() - want) <= 1e-6 * std::abs(want));
    (j["step"].is_null() ? epochs : steps)++;
  }
  CHECK(steps == 6);
  CHECK(epochs == 2);
  fs::remove(metrics);
}

TEST_CASE("training is reproducible for any worker count") {
  auto cfg = small(2);
  const auto a = pretrain(data(), cfg);
  cfg.workers = 3;
  const auto b = pretrain(data(), cfg);
  CHECK(max_difference(a.model, b.model) == 0.0);
  CHECK(a.epochs.back().total == b.epochs.back().total);
  cfg.seed = 12;
  const auto c = pretrain(data(), cfg);
  CHECK(max_difference(a.model, c.model) > 0.0);
}

TEST_CASE("resuming reproduces an uninterrupted run") {
  const auto cfg = small(4);
  const auto full = pretrain(data(), cfg);

  const auto ckpt = temp("resume.ckpt");
  PretrainOptions first;
  first.checkpoint_path = ckpt;
  first.stop_after_epoch = 2;
  const auto part = pretrain(data(), cfg, first);
  CHECK(part.epochs_completed == 2);

  PretrainOptions second;
  second.resume_from = ckpt;
  const auto resumed = pretrain(data(), cfg, second);
  CHECK(resumed.epochs_completed == 4);
  CHECK(resumed.optimizer.steps() == full.optimizer.steps());
  CHECK(max_difference(resumed.model, full.model) <= 1e-4);
  REQUIRE(resumed.epochs.size() == 2);
  CHECK(resumed.epochs[1].total == doctest::Approx(full.epochs[3].total).epsilon(1e-4));

  auto other = cfg;
  other.seed = 99;
  CHECK_THROWS_AS(pretrain(data(), other, second), ConfigError);
  fs::remove(ckpt);
}

TEST_CASE("regularization alone still trains") {
  auto cfg = small(1);
  cfg.loss.alpha = 0;
  cfg.loss.beta = 0;
  const Model init(cfg.model, cfg.seed);
  const auto r = pretrain(data(), cfg);
  CHECK(max_difference(init, r.model) > 0.0);
  CHECK(r.epochs[0].total == doctest::Approx(r.epochs[0].regularization));
}

TEST_CASE("multiview toggle and baseline mode run") {
  auto cfg = small(1);
  cfg.multiview = false;
  CHECK(std::isfinite(pretrain(data(), cfg).epochs[0].total));
  cfg.model.decomposition = DecompositionMode::global;
  cfg.loss.beta = 0;
  const auto r = pretrain(data(), cfg);
  CHECK(r.epochs[0].composition == 0.0);
  CHECK(r.epochs[0].d_global > 0.0);
}

TEST_CASE("configuration checks") {
  auto cfg = small();
  cfg.batch_size = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small();
  cfg.augmentation.frames_out = 9;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small();
  cfg.model.joints = 25;
  CHECK_THROWS(pretrain(data(), cfg));
}

TEST_CASE("final checkpoint carries optimizer state") {
  const auto ckpt = temp("final.ckpt");
  PretrainOptions opts;
  opts.checkpoint_path = ckpt;
  const auto r = pretrain(data(), small(1), opts);
  const auto c = read_checkpoint(ckpt);
  CHECK(c.header["epochs_completed"] == 1);
  CHECK(c.header["adam"]["steps"] == r.optimizer.steps());
  CHECK(c.find("adam.m." + r.model.parameters().all()[0].name) != nullptr);
  CHECK(max_difference(load_model(ckpt), r.model) == 0.0);
  fs::remove(ckpt);
}
