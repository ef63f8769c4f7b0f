// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dpgp {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// Hashes (seed, tags...) into a 64-bit key. Streams keyed by distinct tag
/// tuples are statistically independent and do not depend on scheduling.
std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

/// Engine seeded from stream_key(seed, tags).
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

/// Stream purposes, used as the first tag.
enum class StreamTag : std::uint64_t {
  kInit = 1,
  kNewPatternMc = 2,
  kNewPatternParams = 3,
  kAssignmentDraw = 4,
  kLengthScale = 5,
  kAlpha = 6,
  kClassify = 7,
  kSimulate = 8,
  kGenerate = 9,
  kSynth = 10,
};

inline std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

/// Gamma(shape, scale) draw.
double draw_gamma(Rng& rng, double shape, double scale);

}  // namespace dpgp
