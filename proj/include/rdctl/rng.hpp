#pragma once

#include <cstdint>
#include <random>

namespace rdctl {

/// splitmix64 finaliser; used to derive independent stream keys.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Key for the random stream of (seed, stream, index). Each key depends only on
/// its arguments, so any partition of indices across workers draws the same numbers.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return mix64(mix64(mix64(seed) ^ stream) + index);
}

/// Engine for one stream; the seed sequence spreads the 64-bit key over the full state.
inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t key = stream_key(seed, stream, index);
  std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

/// Stream identifiers, so different consumers of one seed never share numbers.
namespace streams {
inline constexpr std::uint64_t kNoise = 1;
inline constexpr std::uint64_t kInit = 2;
inline constexpr std::uint64_t kBallSampling = 3;
inline constexpr std::uint64_t kFillSampling = 4;
inline constexpr std::uint64_t kTraining = 5;
inline constexpr std::uint64_t kDirections = 6;
}  // namespace streams

}  // namespace rdctl
