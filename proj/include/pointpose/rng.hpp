#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace pointpose {

// Scalar draws on top of std::mt19937_64. The std:: distribution objects are
// implementation-defined, which would break byte-stable dataset generation
// across standard libraries, so the few distributions we need live here.

// 53 random bits mapped to [0, 1).
inline double uniform_unit(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& gen, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(gen);
}

// Box-Muller without the cached second value, so the stream position is a
// simple function of the call count.
inline double normal(std::mt19937_64& gen) {
  double u1 = uniform_unit(gen);
  while (u1 == 0.0) u1 = uniform_unit(gen);
  const double u2 = uniform_unit(gen);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(6.283185307179586476925286766559 * u2);
}

// Unbiased integer in [0, n) via rejection.
inline std::uint64_t uniform_below(std::mt19937_64& gen, std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t x;
  do {
    x = gen();
  } while (x >= limit);
  return x % n;
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& gen) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_below(gen, i)]);
  }
}

}  // namespace pointpose
