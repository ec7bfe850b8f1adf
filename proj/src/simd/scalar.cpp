#include "scalar.hpp"

namespace exion::simd::scalar {

int64_t dot_i16(const int16_t* a, const int16_t* b, std::size_t n) {
  int64_t acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += int64_t{a[i]} * int64_t{b[i]};
  return acc;
}

namespace {

inline uint32_t one_hot(int32_t e) { return e < 32 ? (uint32_t{1} << e) : 0u; }

}  // namespace

int64_t log_dot(LogSpan a, LogSpan b, std::size_t n) {
  int64_t acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int32_t s = a.sign[i] * b.sign[i];
    if (s == 0) continue;
    const uint32_t mag = one_hot(a.hi[i] + b.hi[i]) | one_hot(a.hi[i] + b.lo[i]) |
                         one_hot(a.lo[i] + b.hi[i]) | one_hot(a.lo[i] + b.lo[i]);
    acc += s * int64_t{mag};
  }
  return acc;
}

}  // namespace exion::simd::scalar
