#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kgbridge {

using Digest = std::array<std::uint8_t, 32>;

// Incremental SHA-256 (OpenSSL-backed).
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t len);
  void update(std::string_view s) { update(s.data(), s.size()); }
  Digest finish();

 private:
  void* ctx_;
};

Digest sha256(const void* data, std::size_t len);
Digest sha256(std::string_view s);
std::string to_hex(const Digest& d);

// SHA-256 of a file's contents (hex). Throws DataError if unreadable.
std::string sha256_file_hex(const std::string& path);

// FNV-1a, used for n-gram bucketing.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace kgbridge
