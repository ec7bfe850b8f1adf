#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "exion/qtensor.hpp"

namespace testing {

using Rng = std::mt19937_64;

inline std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline exion::QTensor random_tensor(Rng& rng, std::size_t r, std::size_t c, int bits, int scale = 0) {
  const int32_t lim = static_cast<int32_t>((int64_t{1} << (bits - 1)) - 1);
  std::uniform_int_distribution<int32_t> dist(-lim - 1, lim);
  std::vector<int32_t> v(r * c);
  for (auto& x : v) x = dist(rng);
  return exion::QTensor({r, c}, bits, scale, std::move(v));
}

// i.i.d. Bernoulli mask, each bit set with probability `density`.
inline exion::Bitmask random_mask(Rng& rng, std::size_t r, std::size_t c, double density) {
  std::bernoulli_distribution keep(density);
  exion::Bitmask m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) m.set(i, j, keep(rng));
  }
  return m;
}

// Mask whose per-column density is drawn from Beta(a, a * (1 - d) / d), so the
// mean density is d while columns range from near-empty to near-full. Smaller
// `a` spreads the column densities further apart.
inline exion::Bitmask column_skewed_mask(Rng& rng, std::size_t r, std::size_t c, double density, double a) {
  std::gamma_distribution<double> ga(a, 1.0), gb(a * (1.0 - density) / density, 1.0);
  exion::Bitmask m(r, c);
  for (std::size_t j = 0; j < c; ++j) {
    const double x = ga(rng), y = gb(rng);
    std::bernoulli_distribution keep(x + y > 0.0 ? x / (x + y) : 0.0);
    for (std::size_t i = 0; i < r; ++i) m.set(i, j, keep(rng));
  }
  return m;
}

}  // namespace testing
