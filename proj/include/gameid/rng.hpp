#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace gameid {

// splitmix64 finalizer; used both for seed mixing and as a cheap stable hash.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic RNG with a fixed algorithm and fixed sampling routines.
// std::shuffle / std::uniform_int_distribution are implementation-defined, so
// everything that must reproduce bit-identically across toolchains (fold
// deals, split draws, weight init, batch order) goes through this class.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : state_(seed == 0 ? 0x1234567887654321ULL : seed) {
    // warm up so near-zero seeds decorrelate
    for (int i = 0; i < 4; ++i) next();
  }

  static SeededRng derive(std::uint64_t seed, std::string_view tag) {
    return SeededRng(mix64(seed ^ fnv1a64(tag)));
  }
  static SeededRng derive(std::uint64_t seed, std::string_view tag, std::uint64_t n) {
    return SeededRng(mix64(mix64(seed ^ fnv1a64(tag)) ^ n));
  }

  // xorshift* core
  std::uint64_t next() {
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dULL;
  }

  // Unbiased uniform integer in [0, n) via rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~0ULL - (~0ULL % n);
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace gameid
