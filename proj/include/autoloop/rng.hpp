#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace autoloop {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent, collision-free seeds from
// a master seed and a counter.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t counter) {
  return mix_seed(master ^ mix_seed(counter + 0x632be59bd9b4e019ULL));
}

// 64-bit FNV-1a, stable across platforms and runs.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace autoloop
