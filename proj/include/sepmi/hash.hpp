#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace sepmi {

// FNV-1a 64-bit over bytes. Used for config hashes and estimate fingerprints
// in output metadata; stable across runs and platforms.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t h) {
  char out[20];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

// Fingerprint of a double buffer via its %.17g rendering, so values that
// round-trip identically fingerprint identically.
inline std::string fingerprint_doubles(const double* p, std::ptrdiff_t n) {
  std::string bytes;
  char buf[48];
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,", p[i]);
    bytes += buf;
  }
  return hex64(fnv1a(bytes));
}

}  // namespace sepmi
