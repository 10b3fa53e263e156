#include "scramblesuit/morphing.hpp"

#include <algorithm>
#include <numeric>

#include "scramblesuit/crypto.hpp"

namespace scramblesuit::morphing {

namespace {

std::mt19937_64 seeded_engine(ByteSpan seed) {
  std::vector<std::uint32_t> words;
  for (std::size_t i = 0; i + 4 <= seed.size(); i += 4) {
    words.push_back(static_cast<std::uint32_t>(seed[i]) << 24 |
                    static_cast<std::uint32_t>(seed[i + 1]) << 16 |
                    static_cast<std::uint32_t>(seed[i + 2]) << 8 |
                    static_cast<std::uint32_t>(seed[i + 3]));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

}  // namespace

Prng::Prng() : engine_(seeded_engine(crypto::secure_random(32))) {}

Prng::Prng(ByteSpan seed32) : engine_(seeded_engine(seed32)) {}

std::uint32_t Prng::uniform(std::uint32_t lo, std::uint32_t hi) {
  return std::uniform_int_distribution<std::uint32_t>(lo, hi)(engine_);
}

double Prng::uniform_open(double hi) {
  std::uniform_real_distribution<double> d(0.0, hi);
  double v;
  do {
    v = d(engine_);
  } while (v <= 0.0);
  return v;
}

MorphDistribution generate_distribution(Kind kind, Prng& rng) {
  const std::uint32_t value_lo = (kind == Kind::Length) ? 1 : 0;
  const std::uint32_t value_hi = (kind == Kind::Length) ? kMaxBodyLen : 99;

  std::uint32_t n = rng.uniform(1, kMaxBins);
  n = std::min(n, value_hi - value_lo + 1);  // distinct values must fit

  std::vector<std::uint32_t> values(value_hi - value_lo + 1);
  std::iota(values.begin(), values.end(), value_lo);
  std::vector<std::uint32_t> chosen;
  std::sample(values.begin(), values.end(), std::back_inserter(chosen), n,
              rng.engine());
  std::shuffle(chosen.begin(), chosen.end(), rng.engine());

  // stick breaking: b_i uniform in (0, 1 - sum of earlier b_j); the leftover
  // mass is folded back in by normalising to 1
  MorphDistribution dist{kind, {}};
  double remaining = 1.0;
  double total = 0.0;
  for (std::uint32_t i = 0; i < n; i++) {
    double b = rng.uniform_open(remaining);
    remaining -= b;
    total += b;
    dist.bins.push_back({chosen[i], b});
  }
  for (auto& bin : dist.bins) bin.probability /= total;
  return dist;
}

std::uint32_t sample(const MorphDistribution& dist, Prng& rng) {
  double r = std::uniform_real_distribution<double>(0.0, 1.0)(rng.engine());
  double cum = 0.0;
  for (const auto& bin : dist.bins) {
    cum += bin.probability;
    if (r < cum) return bin.value;
  }
  return dist.bins.back().value;  // r landed in fp rounding slack
}

std::vector<std::uint32_t> morph_lengths(const MorphDistribution& dist,
                                         std::size_t pending_bytes,
                                         Prng& rng) {
  std::vector<std::uint32_t> targets;
  std::size_t remaining = pending_bytes;
  while (remaining > 0) {
    std::uint32_t len = sample(dist, rng);
    targets.push_back(len);
    if (remaining <= len) break;
    remaining -= len;
  }
  return targets;
}

std::uint32_t next_delay(const MorphDistribution& dist, Prng& rng) {
  return sample(dist, rng);
}

std::uint32_t handshake_pad_len(const MorphDistribution& length_dist,
                                Prng& rng) {
  MorphDistribution truncated{Kind::Length, {}};
  double total = 0.0;
  for (const auto& bin : length_dist.bins) {
    if (bin.value <= kMaxHandshakePad) {
      truncated.bins.push_back(bin);
      total += bin.probability;
    }
  }
  if (truncated.bins.empty()) return rng.uniform(0, kMaxHandshakePad);
  for (auto& bin : truncated.bins) bin.probability /= total;
  return sample(truncated, rng);
}

}  // namespace scramblesuit::morphing
