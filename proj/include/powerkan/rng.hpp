#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace powerkan {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for a named stream ("init", "data", "grid-search", ...) derived from
/// one master seed. Streams with different names are decorrelated.
inline std::uint64_t stream_seed(std::uint64_t master, std::string_view stream) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return splitmix64(master ^ splitmix64(h));
}

inline std::mt19937_64 make_stream(std::uint64_t master, std::string_view stream) {
  return std::mt19937_64(stream_seed(master, stream));
}

}  // namespace powerkan
