#pragma once

// Little-endian primitives shared by the SKD1 / FBK1 / DCC1 containers.

#include "dcc/errors.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

namespace dcc::detail {

static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");

inline void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

inline void write_f32(std::ostream& out, std::span<const float> values) {
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
}

/// Tracks the absolute byte offset so errors can point at the bad spot.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::uint64_t offset() const { return offset_; }

  void read(void* dst, std::size_t n, const std::string& what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError("truncated while reading " + what, offset_ + static_cast<std::uint64_t>(in_.gcount()));
    }
    offset_ += n;
  }

  std::uint32_t u32(const std::string& what) {
    std::uint32_t v;
    read(&v, 4, what);
    return v;
  }

  void f32(std::span<float> dst, const std::string& what) { read(dst.data(), dst.size() * sizeof(float), what); }

  std::string bytes(std::size_t n, const std::string& what) {
    std::string s(n, '\0');
    read(s.data(), n, what);
    return s;
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

}  // namespace dcc::detail
