#pragma once

#include <cstdint>

namespace tbseg {

// Counter-based deterministic random generator.
//
// Each draw hashes (seed, ++counter) through the SplitMix64 finalizer
// (Steele et al., constants 0x9E3779B97F4A7C15 / 0xBF58476D1CE4E5B9 /
// 0x94D049BB133111EB). The same seed and call sequence produce the same
// stream on every platform; no libm is involved anywhere in the generator,
// including the normal variate (sum of 12 uniforms).
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), counter_(0) {}

  uint64_t next_u64() {
    uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 24 bits of mantissa.
  float uniform() {
    return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
  }

  // Uniform integer in [0, n). Lemire's multiply-shift; no rejection,
  // bias is below 2^-40 for any n used here.
  uint64_t below(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Approximate standard normal: sum of 12 uniforms minus 6 (Irwin-Hall).
  // Exactly reproducible across platforms; tails are clipped at +-6 which
  // is adequate for weight initialization.
  float normal() {
    float s = 0.0f;
    for (int i = 0; i < 12; ++i) s += uniform();
    return s - 6.0f;
  }

  // Derived independent stream, e.g. one per generated sample. The child
  // seed mixes the parent seed with the stream id through the same
  // finalizer, so streams do not overlap for distinct ids.
  Rng stream(uint64_t stream_id) const {
    uint64_t z = seed_ ^ (0x9E3779B97F4A7C15ULL + stream_id * 0xBF58476D1CE4E5B9ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
  }

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }

 private:
  uint64_t seed_;
  uint64_t counter_;
};

}  // namespace tbseg
