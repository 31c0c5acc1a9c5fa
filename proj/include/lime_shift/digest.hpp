#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace lime_shift {

inline constexpr std::string_view kVersion = "0.1.0";

// FNV-1a, 64 bit. Content fingerprint for provenance, not a security hash.
inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string digest_hex(std::string_view bytes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

}  // namespace lime_shift
