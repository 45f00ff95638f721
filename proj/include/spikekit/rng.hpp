#pragma once

#include <cmath>
#include <cstdint>

#include "spikekit/types.hpp"

namespace spikekit {

/** Named sub-streams derived from the run's global seed. Keeping the
 *  streams disjoint means that e.g. disabling the noise branch cannot
 *  shift weight initialization or batch shuffling. */
enum class RngStream : std::uint64_t {
  kWeightInit = 1,
  kShuffle = 2,
  kNoise = 3,
  kSynthData = 4,
  kSplit = 5,
};

/** Deterministic counter-based generator (splitmix64 core).
 *
 *  Self-contained so that draws are bit-identical across standard
 *  libraries and platforms; std::uniform_real_distribution makes no
 *  such promise.
 */
class Rng {
 public:
  Rng(std::uint64_t seed, RngStream stream)
      : Rng(seed, static_cast<std::uint64_t>(stream)) {}

  Rng(std::uint64_t seed, std::uint64_t stream_id) {
    // Mix seed and stream id so nearby seeds give unrelated streams.
    state_ = splitmix(seed + 0x9E3779B97F4A7C15ULL * (stream_id + 1));
    if (state_ == 0) state_ = 0x2545F4914F6CDD1DULL;
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return splitmix(state_);
  }

  /** Uniform draw in (0, 1]; never returns 0 so that a Bernoulli rule
   *  "spike iff u <= p" is exact at p = 0 and p = 1. */
  scalar_t uniform_open0() {
    return static_cast<scalar_t>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /** Uniform draw in [0, 1). */
  scalar_t uniform01() {
    return static_cast<scalar_t>(next_u64() >> 11) * 0x1.0p-53;
  }

  scalar_t uniform(scalar_t lo, scalar_t hi) {
    return lo + (hi - lo) * uniform01();
  }

  /** Standard normal via Box-Muller (deterministic, no cached spare). */
  scalar_t normal() {
    scalar_t u1 = uniform_open0();
    scalar_t u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  bool bernoulli(scalar_t p) { return uniform_open0() <= p; }

  /** Integer in [0, n). */
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    return x;
  }

  std::uint64_t state_;
};

}  // namespace spikekit
