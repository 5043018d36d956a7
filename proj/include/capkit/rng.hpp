#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace capkit {

// Counter-based deterministic random numbers. Every draw is a pure function
// of the key words fed into the mixer, so callers key a draw by (seed, row,
// col), (seed, token), (seed, epoch, position) and so on. No shared state,
// identical output on every platform.
namespace rng {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix(uint64_t a) { return splitmix64(a); }

inline uint64_t mix(uint64_t a, uint64_t b) { return splitmix64(splitmix64(a) ^ b); }

inline uint64_t mix(uint64_t a, uint64_t b, uint64_t c) {
  return splitmix64(mix(a, b) ^ c);
}

inline uint64_t mix(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
  return splitmix64(mix(a, b, c) ^ d);
}

// FNV-1a, for keying draws by strings (e.g. OOV embedding per token).
inline uint64_t hash_string(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Uniform double in [0, 1) from the top 53 bits.
inline double to_unit(uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Stateful stream on top of the mixer; used where a sequence of draws is
// more natural than per-item keys (parameter init, epoch shuffles).
class Stream {
 public:
  explicit Stream(uint64_t seed) : state_(splitmix64(seed)) {}
  Stream(uint64_t seed, uint64_t salt) : state_(mix(seed, salt)) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  double next_unit() { return to_unit(next_u64()); }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Unbiased integer in [0, n) by rejection.
  uint64_t next_below(uint64_t n) {
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  template <typename Vec>
  void shuffle(Vec& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

}  // namespace rng
}  // namespace capkit
