#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "lorvp/errors.hpp"

namespace lorvp::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

template <class T>
  requires std::is_trivially_copyable_v<T>
void write_le(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

/// Reads one little-endian value; a short read raises a truncation error
/// naming `section`.
template <class T>
  requires std::is_trivially_copyable_v<T>
T read_le(std::istream& in, const std::string& section) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw FormatError(FormatError::Kind::kTruncated, "truncated file in section '" + section + "'");
  }
  return value;
}

inline void read_exact(std::istream& in, void* dst, std::size_t n, const std::string& section) {
  in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n)) {
    throw FormatError(FormatError::Kind::kTruncated, "truncated file in section '" + section + "'");
  }
}

}  // namespace lorvp::io
