#pragma once

#include "dcc/model.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dcc {

inline constexpr const char* kCheckpointFormat = "DCC1";

struct Blob {
  std::string name;
  MatrixF value;
};

/// A single-line JSON header followed by a newline and the raw float32
/// blobs. The header lists every blob's name, shape, and byte offset
/// relative to the start of the blob section, so `head -n1 file` is plain
/// JSON.
struct Checkpoint {
  nlohmann::json header;
  std::vector<Blob> blobs;

  const Blob* find(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Header {format, model_config} plus one blob per parameter.
Checkpoint checkpoint_from_model(const Model& model);

/// Copies every parameter from `ckpt` into `model`. Throws FormatError
/// naming the first missing blob or mismatching shape.
void load_parameters(Model& model, const Checkpoint& ckpt);

/// Builds a model from the header's model_config and loads its parameters.
Model model_from_checkpoint(const Checkpoint& ckpt);
Model load_model(const std::filesystem::path& path);

}  // namespace dcc
