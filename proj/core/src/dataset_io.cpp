#include "dcc/dataset_io.hpp"

#include "binary_io.hpp"
#include "dcc/errors.hpp"

#include <json.hpp>

#include <fstream>

namespace dcc {

using nlohmann::json;

void write_dataset(std::ostream& out, const Dataset& dataset) {
  const int C = 3;
  const int V = dataset.topology.n_joints();
  for (const auto& s : dataset.sequences) {
    if (s.coords.channels() != C || s.coords.joints() != V) {
      throw ShapeError("write_dataset: every sequence must be (3, " + std::to_string(V) + ", T)");
    }
  }
  json manifest = {{"version", kDatasetVersion},
                   {"count", dataset.sequences.size()},
                   {"C", C},
                   {"V", V},
                   {"T_max", dataset.max_frames()},
                   {"class_names", dataset.class_names},
                   {"topology", {{"parent", dataset.topology.parent}}}};
  const std::string text = manifest.dump();
  out.write(kDatasetMagic, sizeof(kDatasetMagic));
  detail::write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& s : dataset.sequences) {
    detail::write_u32(out, static_cast<std::uint32_t>(s.coords.frames()));
    detail::write_u32(out, s.label ? static_cast<std::uint32_t>(*s.label) : kUnlabeled);
    detail::write_u32(out, static_cast<std::uint32_t>(s.subject_id));
    detail::write_u32(out, static_cast<std::uint32_t>(s.performance_id));
    detail::write_u32(out, static_cast<std::uint32_t>(s.camera_id));
    detail::write_f32(out, s.coords.data());
  }
  if (!out) throw FormatError("write_dataset: stream write failed");
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    write_dataset(out, dataset);
    out.flush();
    if (!out) throw FormatError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Dataset read_dataset(std::istream& in) {
  detail::Reader r(in);
  char magic[8];
  r.read(magic, 8, "magic");
  if (std::memcmp(magic, kDatasetMagic, 8) != 0) throw FormatError("bad magic (not an SKD1 dataset)", 0);
  const auto len = r.u32("manifest length");
  const auto manifest_offset = r.offset();
  json manifest;
  try {
    manifest = json::parse(r.bytes(len, "manifest"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), manifest_offset);
  }

  Dataset ds;
  std::size_t count = 0;
  int C = 0;
  int V = 0;
  try {
    const int version = manifest.at("version").get<int>();
    if (version != kDatasetVersion) {
      throw FormatError("unsupported dataset version " + std::to_string(version), manifest_offset);
    }
    count = manifest.at("count").get<std::size_t>();
    C = manifest.at("C").get<int>();
    V = manifest.at("V").get<int>();
    ds.class_names = manifest.at("class_names").get<std::vector<std::string>>();
    ds.topology.parent = manifest.at("topology").at("parent").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest field error: ") + e.what(), manifest_offset);
  }
  if (C != 3) throw FormatError("manifest C must be 3", manifest_offset);
  if (ds.topology.n_joints() != V) throw FormatError("manifest topology size differs from V", manifest_offset);
  try {
    ds.topology.validate();
  } catch (const SchemaError& e) {
    throw FormatError(std::string("manifest topology: ") + e.what(), manifest_offset);
  }

  ds.sequences.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string rec = "record " + std::to_string(i);
    const auto T = r.u32(rec + " frame count");
    if (T == 0) throw FormatError(rec + ": zero frames", r.offset() - 4);
    SkeletonSequence s;
    const auto label = r.u32(rec + " label");
    if (label != kUnlabeled) s.label = static_cast<int>(label);
    s.subject_id = static_cast<int>(r.u32(rec + " subject"));
    s.performance_id = static_cast<int>(r.u32(rec + " performance"));
    s.camera_id = static_cast<int>(r.u32(rec + " camera"));
    s.coords = Coords(C, V, static_cast<int>(T));
    r.f32(s.coords.data(), rec + " coordinates");
    ds.sequences.push_back(std::move(s));
  }
  if (!r.at_end()) {
    throw FormatError("manifest count " + std::to_string(count) + " but more record data follows", r.offset());
  }
  return ds;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  return read_dataset(in);
}

}  // namespace dcc
