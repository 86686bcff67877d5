#pragma once

#include <cstdint>
#include <random>

namespace vtp {

using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent stream seeds from (seed, stream).
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Named streams keep the draws of one subsystem independent of another.
enum class Stream : std::uint64_t {
  kWorld = 1,
  kExpert = 2,
  kTactile = 3,
  kGoalNoise = 4,
  kPolicy = 5,
  kLayout = 6,
  kDrift = 7,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  return Rng(mix_seed(seed, static_cast<std::uint64_t>(stream)));
}

}  // namespace vtp
