#include "dcc/dataset_io.hpp"
#include "dcc/errors.hpp"
#include "dcc/synth.hpp"

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <sstream>

using namespace dcc;

namespace {

Dataset small() {
  SynthConfig cfg;
  cfg.n_performances = 5;
  auto ds = synth_generate(cfg);
  ds.sequences[3].label.reset();
  ds.sequences[4].coords = resample_uniform(ds.sequences[4].coords, 9);
  return ds;
}

std::string encode(const Dataset& ds) {
  std::ostringstream out;
  write_dataset(out, ds);
  return out.str();
}

std::string error_of(const std::string& bytes) {
  std::istringstream in(bytes);
  try {
    read_dataset(in);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("stream round trip is bit-exact") {
  const auto ds = small();
  const auto bytes = encode(ds);
  CHECK(std::memcmp(bytes.data(), kDatasetMagic, 8) == 0);
  std::istringstream in(bytes);
  const auto back = read_dataset(in);
  CHECK(back == ds);
  CHECK(!back.sequences[3].label);
  CHECK(back.sequences[4].coords.frames() == 9);
  CHECK(encode(back) == bytes);
}

TEST_CASE("file round trip") {
  const auto ds = small();
  const auto path = std::filesystem::temp_directory_path() / "dcc_test_dataset.skd";
  write_dataset(path, ds);
  CHECK(read_dataset(path) == ds);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_dataset(path), FormatError);
}

TEST_CASE("corruption is reported with a byte offset") {
  const auto bytes = encode(small());

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(error_of(bad_magic).find("byte 0") != std::string::npos);

  const auto truncated = bytes.substr(0, bytes.size() - 10);
  const auto msg = error_of(truncated);
  CHECK(msg.find("byte ") != std::string::npos);
  CHECK(msg.find("record 9") != std::string::npos);

  CHECK(!error_of(bytes + "xx").empty());
  CHECK(!error_of(bytes.substr(0, 5)).empty());
}
