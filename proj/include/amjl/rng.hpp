#pragma once

#include <cstdint>
#include <random>

namespace amjl {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent streams from a master seed.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic generator for sub-stream `stream` of `seed`.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream) {
  return Rng(mix64(mix64(seed) ^ mix64(stream + 0x51ed2701ULL)));
}

inline Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return make_stream(mix64(seed) ^ mix64(a + 0x2545f491ULL), b);
}

}  // namespace amjl
