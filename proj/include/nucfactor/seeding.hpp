#pragma once

// Named random substreams derived from one top-level seed.

#include <cstdint>
#include <string_view>

namespace nucfactor {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of substream (`name`, `index`) under `base`. FNV-1a on the name.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view name, std::uint64_t index = 0) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return splitmix64(splitmix64(base ^ h) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

}  // namespace nucfactor
