#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "kgbridge/errors.hpp"

// Little-endian binary readers/writers shared by the cache and
// checkpoint formats. Reads throw DataError on truncation.

namespace kgbridge::binio {

template <typename T>
void write_scalar(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_scalar(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw DataError(std::string("truncated file while reading ") + what);
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_scalar<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const char* what) {
  const auto n = read_scalar<std::uint32_t>(in, what);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw DataError(std::string("truncated file while reading ") + what);
  return s;
}

inline void write_f32_array(std::ostream& out, const float* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(n * sizeof(float)));
}

inline void read_f32_array(std::istream& in, float* data, std::size_t n,
                           const char* what) {
  in.read(reinterpret_cast<char*>(data),
          static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw DataError(std::string("truncated file while reading ") + what);
}

}  // namespace kgbridge::binio
