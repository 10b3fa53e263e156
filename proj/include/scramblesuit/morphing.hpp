#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "scramblesuit/common.hpp"

namespace scramblesuit::morphing {

constexpr std::uint32_t kMaxBins = 100;
constexpr std::uint32_t kMaxBodyLen = 1460;
constexpr std::uint32_t kMaxDelayMs = 100;  // exclusive
constexpr std::uint32_t kMaxHandshakePad = 1388;

/// Session RNG. Reproducible from a 32-byte seed; otherwise seeded from the
/// system CSPRNG.
class Prng {
 public:
  Prng();
  explicit Prng(ByteSpan seed32);

  /// Uniform integer in [lo, hi] inclusive.
  std::uint32_t uniform(std::uint32_t lo, std::uint32_t hi);
  /// Uniform real in the open interval (0, hi).
  double uniform_open(double hi);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

enum class Kind { Length, Delay };

struct Bin {
  std::uint32_t value;
  double probability;
};

struct MorphDistribution {
  Kind kind;
  std::vector<Bin> bins;  // probabilities sum to 1, values distinct
};

MorphDistribution generate_distribution(Kind kind, Prng& rng);

std::uint32_t sample(const MorphDistribution& dist, Prng& rng);

/// Target body lengths for `pending_bytes` of application data. Each sampled
/// length either splits the pending data or, on the final target, pads up to
/// the sample.
std::vector<std::uint32_t> morph_lengths(const MorphDistribution& dist,
                                         std::size_t pending_bytes, Prng& rng);

/// Delay in integer milliseconds, [0, 100).
std::uint32_t next_delay(const MorphDistribution& dist, Prng& rng);

/// Handshake padding length from the Length distribution truncated to
/// [0, 1388].
std::uint32_t handshake_pad_len(const MorphDistribution& length_dist,
                                Prng& rng);

}  // namespace scramblesuit::morphing
