#include "dcc/checkpoint.hpp"

#include "binary_io.hpp"
#include "dcc/config.hpp"
#include "dcc/errors.hpp"

#include <fstream>

namespace dcc {

using nlohmann::json;

const Blob* Checkpoint::find(const std::string& name) const {
  for (const auto& b : blobs) {
    if (b.name == name) return &b;
  }
  return nullptr;
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  json header = ckpt.header;
  header["format"] = kCheckpointFormat;
  json table = json::array();
  std::uint64_t offset = 0;
  for (const auto& b : ckpt.blobs) {
    const auto bytes = static_cast<std::uint64_t>(b.value.size()) * sizeof(float);
    table.push_back({{"name", b.name}, {"shape", {b.value.rows(), b.value.cols()}}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  header["blobs"] = std::move(table);
  const std::string text = header.dump();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.put('\n');
  for (const auto& b : ckpt.blobs) {
    detail::write_f32(out, std::span<const float>(b.value.data(), static_cast<std::size_t>(b.value.size())));
  }
  if (!out) throw FormatError("checkpoint write failed");
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    write_checkpoint(out, ckpt);
    out.flush();
    if (!out) throw FormatError("checkpoint write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty checkpoint", 0);
  Checkpoint ckpt;
  try {
    ckpt.header = json::parse(line);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is not JSON: ") + e.what(), 0);
  }
  if (ckpt.header.value("format", "") != kCheckpointFormat) {
    throw FormatError("not a DCC1 checkpoint (format field is missing or different)", 0);
  }
  detail::Reader r(in);
  const std::uint64_t base = line.size() + 1;
  try {
    for (const auto& entry : ckpt.header.at("blobs")) {
      Blob b;
      b.name = entry.at("name").get<std::string>();
      const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
      const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      if (offset != r.offset()) throw FormatError("blob " + b.name + " is out of order", base + r.offset());
      b.value.resize(rows, cols);
      r.f32(std::span<float>(b.value.data(), static_cast<std::size_t>(b.value.size())), "blob " + b.name);
      ckpt.blobs.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint blob table: ") + e.what(), 0);
  }
  ckpt.header.erase("blobs");
  return ckpt;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

Checkpoint checkpoint_from_model(const Model& model) {
  Checkpoint ckpt;
  ckpt.header = {{"format", kCheckpointFormat}, {"model_config", to_json(model.config())}};
  for (const auto& p : model.parameters().all()) ckpt.blobs.push_back({p.name, p.var.value()});
  return ckpt;
}

void load_parameters(Model& model, const Checkpoint& ckpt) {
  for (const auto& p : model.parameters().all()) {
    const Blob* b = ckpt.find(p.name);
    if (!b) throw FormatError("checkpoint has no parameter '" + p.name + "'");
    if (b->value.rows() != p.var.rows() || b->value.cols() != p.var.cols()) {
      throw FormatError("parameter '" + p.name + "' has shape (" + std::to_string(b->value.rows()) + "," +
                        std::to_string(b->value.cols()) + ") in checkpoint but (" + std::to_string(p.var.rows()) +
                        "," + std::to_string(p.var.cols()) + ") in model");
    }
  }
  for (const auto& p : model.parameters().all()) p.var.node()->value = ckpt.find(p.name)->value;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.header.contains("model_config")) throw FormatError("checkpoint header has no model_config");
  Model model(model_config_from_json(ckpt.header.at("model_config")), 0);
  load_parameters(model, ckpt);
  return model;
}

Model load_model(const std::filesystem::path& path) { return model_from_checkpoint(read_checkpoint(path)); }

}  // namespace dcc
