#pragma once

#include <cstdint>

namespace cslm {

// Counter-based generator: draw i is a pure function of (seed, i). State is
// two integers, so a stream can be checkpointed and replayed exactly, and the
// sequence is identical across platforms (integer mixing only; the gaussian
// uses an Irwin-Hall sum instead of libm transcendentals).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    std::uint64_t z = seed_ + counter_ * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + next_double() * (hi - lo); }

  // Uniform integer in [0, n), n > 0. Fixed-point multiply avoids modulo bias.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Inclusive range draw.
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi) {
    return lo + below(hi - lo + 1);
  }

  double gaussian(double mean, double stddev) {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += next_double();
    return mean + stddev * (s - 6.0);
  }

  // Independent substream; forks with distinct tags never collide in practice.
  Rng fork(std::uint64_t tag) const {
    std::uint64_t z = seed_ ^ (0xD1B54A32D192ED03ULL * (tag + 1));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace cslm
