#pragma once

#include <cstdint>
#include <initializer_list>

namespace roqj {

/// Counter-based random stream. Every draw is a pure function of the master
/// seed and a tuple of counters, so a draw's value does not depend on which
/// worker computes it or in what order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t bits(std::initializer_list<std::uint64_t> counters) const;

  /// Uniform on [0, 1) with 53 random bits.
  double uniform(std::initializer_list<std::uint64_t> counters) const;

  /// Standard normal via Box-Muller over two derived uniforms.
  double normal(std::initializer_list<std::uint64_t> counters) const;

 private:
  std::uint64_t seed_;
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace roqj
