#pragma once

#include <cstdint>
#include <random>

namespace uista {

/// Independent deterministic generator for (seed, stream). Every stochastic
/// component draws from its own stream so that adding draws in one place
/// never shifts another.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

namespace streams {
inline constexpr std::uint64_t kMeasurement = 1;
inline constexpr std::uint64_t kDictionary = 2;
inline constexpr std::uint64_t kTrainSignals = 3;
inline constexpr std::uint64_t kTestSignals = 4;
inline constexpr std::uint64_t kShuffle = 5;
inline constexpr std::uint64_t kInit = 6;
inline constexpr std::uint64_t kRademacher = 7;
}  // namespace streams

}  // namespace uista
