#include "dcc/errors.hpp"
#include "dcc/pairing.hpp"
#include "dcc/synth.hpp"

#include <doctest.h>

#include <set>

using namespace dcc;

TEST_CASE("unordered pair enumeration") {
  CHECK(pair_space_size(1) == 1);
  CHECK(pair_space_size(2) == 3);
  CHECK(pair_space_size(3) == 6);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t r = 0; r < 6; ++r) {
    const auto p = unordered_pair(r, 3);
    CHECK(p.first <= p.second);
    seen.insert(p);
  }
  CHECK(seen.size() == 6);
  CHECK_THROWS_AS(unordered_pair(6, 3), ShapeError);
}

TEST_CASE("sampling with three views covers exactly six pairs") {
  SynthConfig cfg;
  cfg.n_performances = 1;
  cfg.n_views = 3;
  const auto ds = synth_generate(cfg);
  const PerformanceIndex index(ds);
  REQUIRE(index.size() == 1);
  Rng rng(5);
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto [a, b] = sample_pair_indices(index, 0, true, rng);
    seen.emplace(ds.sequences[a].camera_id, ds.sequences[b].camera_id);
  }
  CHECK(seen.size() == 6);
}

TEST_CASE("single view degenerates to augmentation-only pairs") {
  SynthConfig cfg;
  cfg.n_performances = 3;
  cfg.n_views = 1;
  const auto ds = synth_generate(cfg);
  const PerformanceIndex index(ds);
  Rng rng(6);
  for (std::size_t g = 0; g < index.size(); ++g) {
    const auto [a, b] = sample_pair_indices(index, g, true, rng);
    CHECK(a == b);
  }
  AugmentationConfig aug;
  aug.frames_out = 16;
  const auto [x, y] = sample_positive_pair(ds, index, 0, true, aug, rng);
  CHECK(x.performance_id == y.performance_id);
  CHECK(!(x.coords == y.coords));
}

TEST_CASE("multiview off pairs a view with itself") {
  SynthConfig cfg;
  cfg.n_performances = 2;
  cfg.n_views = 3;
  const auto ds = synth_generate(cfg);
  const PerformanceIndex index(ds);
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    const auto [a, b] = sample_pair_indices(index, 1, false, rng);
    CHECK(a == b);
    CHECK(ds.sequences[a].performance_id == 1);
  }
}

TEST_CASE("performance index groups by id and orders by camera") {
  Dataset ds;
  ds.topology = SkeletonTopology::body11();
  for (auto [perf, cam] : {std::pair{5, 1}, {7, 0}, {5, 0}}) {
    SkeletonSequence s;
    s.coords = Coords(3, 11, 2);
    s.performance_id = perf;
    s.camera_id = cam;
    ds.sequences.push_back(s);
  }
  const PerformanceIndex index(ds);
  REQUIRE(index.size() == 2);
  CHECK(index.views(0) == std::vector<std::size_t>{2, 0});
  CHECK(index.views(1) == std::vector<std::size_t>{1});
}
