#pragma once

#include <cstdint>
#include <random>

namespace moalign {

using Rng = std::mt19937_64;

// SplitMix64 finalizer, used to derive independent stream seeds from a master
// seed without correlated low bits.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix64(master ^ mix64(stream));
}

}  // namespace moalign
