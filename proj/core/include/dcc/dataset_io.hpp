#pragma once

#include "dcc/skeleton.hpp"

#include <filesystem>
#include <iosfwd>

namespace dcc {

/// Eight-byte SKD1 magic: "SKDSET" 0x01 0x00.
inline constexpr char kDatasetMagic[8] = {'S', 'K', 'D', 'S', 'E', 'T', '\x01', '\x00'};
inline constexpr int kDatasetVersion = 1;
inline constexpr std::uint32_t kUnlabeled = 0xFFFFFFFFu;

/// magic | u32 manifest length | JSON manifest | records. Each record is
/// u32 T, label, subject, performance, camera followed by C*V*T float32 in
/// (C, V, T) order. All integers little-endian.
void write_dataset(std::ostream& out, const Dataset& dataset);
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);

/// Validates magic, version and every record's shape. Errors carry the byte
/// offset and, for record-level problems, the record index.
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace dcc
