#include "dcc/augment.hpp"
#include "dcc/errors.hpp"

#include <doctest.h>

#include <cmath>

using namespace dcc;

namespace {

Coords random_coords(int V, int T, Rng& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  Coords x(3, V, T);
  for (auto& v : x.data()) v = g(rng);
  return x;
}

double distance(const Coords& x, int t, int a, int b) {
  double s = 0;
  for (int c = 0; c < 3; ++c) s += std::pow(static_cast<double>(x(c, a, t)) - x(c, b, t), 2);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("rotation preserves every frame's distance matrix") {
  Rng rng(1);
  std::uniform_real_distribution<double> angle(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_coords(11, 8, rng);
    const auto r = rotate(x, angle(rng), angle(rng), angle(rng));
    for (int t = 0; t < 8; ++t) {
      for (int a = 0; a < 11; ++a) {
        for (int b = a + 1; b < 11; ++b) {
          const double d0 = distance(x, t, a, b);
          const double d1 = distance(r, t, a, b);
          CHECK(std::abs(d1 - d0) <= 1e-5 * std::max(1.0, d0));
        }
      }
    }
  }
}

TEST_CASE("rotation about z by a quarter turn") {
  Coords x(3, 1, 1);
  x(0, 0, 0) = 1.0f;
  const auto r = rotate(x, 0.0, 0.0, std::acos(0.0));
  CHECK(r(0, 0, 0) == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(r(1, 0, 0) == doctest::Approx(1.0));
}

TEST_CASE("identity augmentation returns the input") {
  Rng rng(2);
  SkeletonSequence s;
  s.coords = random_coords(5, 12, rng);
  s.label = 3;
  const auto out = augment(s, AugmentationConfig::identity(12), rng);
  CHECK(out == s);
}

TEST_CASE("augmentation is deterministic under a seed and keeps metadata") {
  Rng data_rng(3);
  SkeletonSequence s;
  s.coords = random_coords(11, 20, data_rng);
  s.label = 2;
  s.performance_id = 9;
  AugmentationConfig cfg;
  cfg.frames_out = 16;
  Rng a(42), b(42), c(43);
  const auto x = augment(s, cfg, a);
  const auto y = augment(s, cfg, b);
  const auto z = augment(s, cfg, c);
  CHECK(x == y);
  CHECK(!(x == z));
  CHECK(x.coords.frames() == 16);
  CHECK(x.label == 2);
  CHECK(x.performance_id == 9);
}

TEST_CASE("configuration validation") {
  AugmentationConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.crop_min = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AugmentationConfig{};
  cfg.frames_out = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("eval preparation centers and resamples") {
  Rng rng(4);
  SkeletonSequence s;
  s.coords = random_coords(11, 30, rng);
  const auto topo = SkeletonTopology::body11();
  const auto out = prepare_eval(s, topo, 16);
  CHECK(out.coords.frames() == 16);
  for (int c = 0; c < 3; ++c) CHECK(out.coords(c, topo.root(), 0) == doctest::Approx(0.0).epsilon(1e-6));
}
