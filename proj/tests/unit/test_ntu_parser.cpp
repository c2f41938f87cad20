#include "dcc/errors.hpp"
#include "dcc/ntu_parser.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace dcc;

namespace {

std::string joint_lines(int n) {
  std::string s;
  for (int j = 0; j < n; ++j) s += "0.1 0.2 0.3 1 2 3 4 0 0 0 0 2\n";
  return s;
}

std::vector<SkeletonSequence> parse_text(const std::string& text, const SkeletonTopology& topo) {
  std::istringstream in(text);
  return parse_ntu_skeleton(in, topo);
}

}  // namespace

TEST_CASE("two-body fixture") {
  std::ifstream in(std::string(DCC_FIXTURE_DIR) + "/sample_two_bodies.skeleton");
  REQUIRE(in);
  const auto bodies = parse_ntu_skeleton(in, SkeletonTopology::ntu25());
  REQUIRE(bodies.size() == 2);
  for (const auto& b : bodies) {
    CHECK(b.coords.channels() == 3);
    CHECK(b.coords.joints() == 25);
    CHECK(b.coords.frames() == 4);
  }
  // First body: x of joint 0 in frame 0 is 0.01 * sin(0) = 0.
  CHECK(bodies[0].coords(0, 0, 0) == doctest::Approx(0.0));
  CHECK(bodies[0].coords(2, 3, 1) == doctest::Approx(3.003));
  // Second body appears from frame 2; earlier frames are zero-filled.
  for (int c = 0; c < 3; ++c) {
    CHECK(bodies[1].coords(c, 7, 0) == 0.0f);
    CHECK(bodies[1].coords(c, 7, 1) == 0.0f);
  }
  CHECK(bodies[1].coords(2, 0, 2) == doctest::Approx(3.0));

  // The second body moves more (amplitude 0.2 versus 0.01) and wins.
  const auto main = select_main_actor(bodies);
  CHECK(main.coords == bodies[1].coords);
  CHECK(motion_energy(bodies[1].coords) > motion_energy(bodies[0].coords));
}

TEST_CASE("parser errors carry line numbers") {
  const auto topo = SkeletonTopology::ntu25();
  SUBCASE("info line with the wrong field count") {
    try {
      parse_text("1\n1\n1 2 3\n25\n" + joint_lines(25), topo);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("joint count mismatch is a schema error") {
    try {
      parse_text("1\n1\n1 0 1 1 1 1 0 0 0 2\n24\n" + joint_lines(24), topo);
      FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
      CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
  }
  SUBCASE("truncated file") {
    CHECK_THROWS_AS(parse_text("2\n1\n1 0 1 1 1 1 0 0 0 2\n25\n" + joint_lines(25), topo), ParseError);
  }
  SUBCASE("malformed joint line") {
    CHECK_THROWS_AS(parse_text("1\n1\n1 0 1 1 1 1 0 0 0 2\n25\nabc\n", topo), ParseError);
  }
  SUBCASE("empty input") { CHECK_THROWS_AS(parse_text("", topo), ParseError); }
}

TEST_CASE("zero-body clip") {
  const auto bodies = parse_text("2\n0\n0\n", SkeletonTopology::ntu25());
  CHECK(bodies.empty());
  CHECK_THROWS_AS(select_main_actor(bodies), SchemaError);
}

TEST_CASE("main actor ties keep the first body") {
  SkeletonSequence a, b;
  a.coords = Coords(3, 2, 3);
  b.coords = Coords(3, 2, 3);
  a.subject_id = 1;
  b.subject_id = 2;
  CHECK(select_main_actor({a, b}).subject_id == 1);
}

TEST_CASE("file name fields") {
  const auto id = parse_ntu_filename("data/S017C003P020R002A060.skeleton");
  REQUIRE(id);
  CHECK(id->setup == 17);
  CHECK(id->camera == 3);
  CHECK(id->performer == 20);
  CHECK(id->replication == 2);
  CHECK(id->action == 60);
  CHECK(!parse_ntu_filename("S017C003P020R002.skeleton"));
  CHECK(!parse_ntu_filename("X017C003P020R002A060.skeleton"));
  CHECK(!parse_ntu_filename("S017C003P020R002A060.txt"));
  CHECK(!parse_ntu_filename("S01xC003P020R002A060.skeleton"));

  // Cameras of one performance share a key; other fields change it.
  const auto c1 = *parse_ntu_filename("S001C001P001R001A001");
  const auto c2 = *parse_ntu_filename("S001C002P001R001A001");
  const auto r2 = *parse_ntu_filename("S001C001P001R002A001");
  CHECK(c1.performance_key() == c2.performance_key());
  CHECK(c1.performance_key() != r2.performance_key());
}

TEST_CASE("published protocol splits") {
  const auto lists = NtuSplitLists::load(DCC_SPLITS_DIR);
  // Cross-view: cameras 2 and 3 train, camera 1 test.
  CHECK(!is_train_split(*parse_ntu_filename("S001C001P001R001A001"), NtuProtocol::xview, lists));
  CHECK(is_train_split(*parse_ntu_filename("S001C002P001R001A001"), NtuProtocol::xview, lists));
  CHECK(is_train_split(*parse_ntu_filename("S001C003P001R001A001"), NtuProtocol::xview, lists));

  // Cross-subject training performers of the 60-class release.
  const std::set<int> xsub60{1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38};
  for (int p = 1; p <= 40; ++p) {
    NtuFileId id{1, 1, p, 1, 1};
    CHECK(is_train_split(id, NtuProtocol::xsub, lists) == xsub60.contains(p));
  }
  CHECK(lists.xsub_train_subjects.size() == 53);

  // Cross-setup: even setup ids train.
  for (int s = 1; s <= 32; ++s) {
    NtuFileId id{s, 1, 1, 1, 1};
    CHECK(is_train_split(id, NtuProtocol::xsetup, lists) == (s % 2 == 0));
  }
  CHECK(parse_protocol("xview") == NtuProtocol::xview);
  CHECK_THROWS_AS(parse_protocol("xfoo"), ConfigError);
}

TEST_CASE("file id metadata") {
  SkeletonSequence s;
  const auto id = *parse_ntu_filename("S002C003P007R001A013.skeleton");
  apply_file_id(s, id);
  CHECK(s.label == 12);
  CHECK(s.subject_id == 7);
  CHECK(s.camera_id == 2);
  CHECK(s.performance_id == id.performance_key());
}
