#include "dcc/errors.hpp"
#include "dcc/synth.hpp"

#include <doctest.h>

#include <set>

using namespace dcc;

TEST_CASE("generation is deterministic") {
  SynthConfig cfg;
  cfg.n_performances = 12;
  CHECK(synth_generate(cfg) == synth_generate(cfg));
  auto other = cfg;
  other.seed = 1;
  CHECK(!(synth_generate(cfg) == synth_generate(other)));
}

TEST_CASE("labels, views and metadata") {
  SynthConfig cfg;
  cfg.n_performances = 10;
  cfg.n_views = 3;
  const auto ds = synth_generate(cfg);
  REQUIRE(ds.sequences.size() == 30);
  CHECK(ds.class_names.size() == 4);
  CHECK(ds.topology == SkeletonTopology::body11());
  for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
    const auto& s = ds.sequences[i];
    CHECK(s.label == s.performance_id % 4);
    CHECK(s.camera_id == static_cast<int>(i % 3));
    CHECK(s.coords.joints() == 11);
    CHECK(s.coords.frames() == 16);
    CHECK_NOTHROW(validate(s));
  }
}

TEST_CASE("views of one performance differ only by camera yaw and noise") {
  SynthConfig cfg;
  cfg.n_performances = 1;
  cfg.n_views = 2;
  cfg.noise_sd = 0.0;
  const auto ds = synth_generate(cfg);
  const auto& a = ds.sequences[0].coords;
  const auto& b = ds.sequences[1].coords;
  CHECK(!(a == b));
  // Yaw keeps the vertical axis and the distance to the root.
  for (int v = 0; v < 11; ++v) {
    for (int t = 0; t < 16; ++t) {
      CHECK(a(1, v, t) == doctest::Approx(b(1, v, t)).epsilon(1e-5));
      const double ra = a(0, v, t) * a(0, v, t) + a(2, v, t) * a(2, v, t);
      const double rb = b(0, v, t) * b(0, v, t) + b(2, v, t) * b(2, v, t);
      CHECK(ra == doctest::Approx(rb).epsilon(1e-4));
    }
  }
}

TEST_CASE("other joint counts use a binary tree") {
  SynthConfig cfg;
  cfg.n_joints = 7;
  cfg.n_performances = 2;
  const auto ds = synth_generate(cfg);
  CHECK(ds.topology == SkeletonTopology::binary_tree(7));
}

TEST_CASE("performance split") {
  SynthConfig cfg;
  cfg.n_performances = 10;
  auto train = synth_generate(cfg);
  const auto test = split_off_performances(train, 6);
  CHECK(train.sequences.size() == 12);
  CHECK(test.sequences.size() == 8);
  std::set<int> ids;
  for (const auto& s : test.sequences) ids.insert(s.performance_id);
  CHECK(*ids.begin() == 6);
}

TEST_CASE("invalid configs") {
  SynthConfig cfg;
  cfg.n_views = 0;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.n_classes = 1;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
  cfg = SynthConfig{};
  cfg.noise_sd = -1;
  CHECK_THROWS_AS(synth_generate(cfg), ConfigError);
}
