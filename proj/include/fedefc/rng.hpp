#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedefc {

using Rng = std::mt19937_64;

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a list of tags
/// (stage id, round, client id, ...). Order of tags matters.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix64(base);
  for (auto t : tags) h = mix64(h ^ mix64(t));
  return h;
}

namespace stream {
inline constexpr std::uint64_t kData = 1;
inline constexpr std::uint64_t kTestData = 2;
inline constexpr std::uint64_t kTransition = 3;
inline constexpr std::uint64_t kNoise = 4;
inline constexpr std::uint64_t kPartition = 5;
inline constexpr std::uint64_t kInit = 6;
inline constexpr std::uint64_t kRound = 7;
inline constexpr std::uint64_t kClient = 8;
}  // namespace stream

}  // namespace fedefc
