#pragma once

#include <cstdint>

namespace qtl {

/// Independent random streams derived from one master seed.
enum class Stream : std::uint64_t {
  Data = 1,          ///< synthetic target data
  Split = 2,         ///< train/test split
  Init = 3,          ///< weight and circuit initialization
  Shuffle = 4,       ///< mini-batch order
  SourceData = 5,    ///< synthetic source data for pretraining
  SourceInit = 6,    ///< pretraining initialization
  SourceShuffle = 7, ///< pretraining batch order
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// seed(stream) = mix64(master ^ mix64(stream id)).
constexpr std::uint64_t stream_seed(std::uint64_t master, Stream stream) {
  return mix64(master ^ mix64(static_cast<std::uint64_t>(stream)));
}

}  // namespace qtl
