#pragma once

#include <cstdint>
#include <string_view>

namespace expweaver {

// PCG-XSH-RR 64/32. Used everywhere a reproducible stream is required
// (world generation, Bernoulli draws); std::uniform_* distributions are
// implementation-defined, so all mapping to ranges happens here.
class Pcg32 {
 public:
  explicit Pcg32(std::uint64_t seed, std::uint64_t stream = 0xda3e39cb94b95bdbULL)
      : state_(0), inc_((stream << 1u) | 1u) {
    next();
    state_ += seed;
    next();
  }

  std::uint32_t next() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  // Unbiased integer in [0, bound) via rejection sampling.
  std::uint32_t next_below(std::uint32_t bound) {
    if (bound <= 1) return 0;
    std::uint32_t threshold = (0u - bound) % bound;
    for (;;) {
      std::uint32_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  // Uniform double in [0, 1) with 32 bits of resolution.
  double next_double() { return next() * (1.0 / 4294967296.0); }

  bool bernoulli(double p) { return next_double() < p; }

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
};

inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic combiner for deriving per-episode seeds from independent parts.
inline std::uint64_t mix_seeds(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

}  // namespace expweaver
