#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace emocpd {

inline constexpr std::string_view kToolVersion = "0.1.0";

// FNV-1a over the canonical config text; embedded in every artifact so a
// result can always be traced back to the exact settings that produced it.
inline uint64_t fnv1a64(std::string_view text) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash_hex(std::string_view canonical_config_text);

}  // namespace emocpd
