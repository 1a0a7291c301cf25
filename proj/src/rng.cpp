#include "roqj/rng.hpp"

#include <cmath>
#include <numbers>

namespace roqj {

std::uint64_t CounterRng::bits(std::initializer_list<std::uint64_t> counters) const {
  std::uint64_t h = mix64(seed_);
  for (std::uint64_t c : counters) {
    h = mix64(h ^ mix64(c + 0x632be59bd9b4e019ULL));
  }
  return h;
}

double CounterRng::uniform(std::initializer_list<std::uint64_t> counters) const {
  return static_cast<double>(bits(counters) >> 11) * 0x1.0p-53;
}

double CounterRng::normal(std::initializer_list<std::uint64_t> counters) const {
  const std::uint64_t h = bits(counters);
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - static_cast<double>(mix64(h ^ 0x1ULL) >> 11) * 0x1.0p-53;
  const double u2 = static_cast<double>(mix64(h ^ 0x2ULL) >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace roqj
