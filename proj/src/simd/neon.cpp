// aarch64 only. Mirrors avx2.cpp lane for lane.
#include <arm_neon.h>

#include "scalar.hpp"

namespace exion::simd::neon {

int64_t dot_i16(const int16_t* a, const int16_t* b, std::size_t n) {
  int64x2_t acc = vdupq_n_s64(0);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const int16x8_t va = vld1q_s16(a + i);
    const int16x8_t vb = vld1q_s16(b + i);
    acc = vpadalq_s32(acc, vmull_s16(vget_low_s16(va), vget_low_s16(vb)));
    acc = vpadalq_s32(acc, vmull_s16(vget_high_s16(va), vget_high_s16(vb)));
  }
  int64_t total = vgetq_lane_s64(acc, 0) + vgetq_lane_s64(acc, 1);
  for (; i < n; ++i) total += int64_t{a[i]} * int64_t{b[i]};
  return total;
}

int64_t log_dot(LogSpan a, LogSpan b, std::size_t n) {
  const uint32x4_t one = vdupq_n_u32(1);
  int64x2_t acc = vdupq_n_s64(0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const int32x4_t ah = vld1q_s32(a.hi + i), al = vld1q_s32(a.lo + i);
    const int32x4_t bh = vld1q_s32(b.hi + i), bl = vld1q_s32(b.lo + i);
    // Register shifts of 32 or more produce zero.
    uint32x4_t mag = vshlq_u32(one, vaddq_s32(ah, bh));
    mag = vorrq_u32(mag, vshlq_u32(one, vaddq_s32(ah, bl)));
    mag = vorrq_u32(mag, vshlq_u32(one, vaddq_s32(al, bh)));
    mag = vorrq_u32(mag, vshlq_u32(one, vaddq_s32(al, bl)));
    const int32x4_t s = vmulq_s32(vld1q_s32(a.sign + i), vld1q_s32(b.sign + i));
    acc = vpadalq_s32(acc, vmulq_s32(vreinterpretq_s32_u32(mag), s));
  }
  int64_t total = vgetq_lane_s64(acc, 0) + vgetq_lane_s64(acc, 1);
  if (i < n) {
    const LogSpan ta{a.sign + i, a.hi + i, a.lo + i};
    const LogSpan tb{b.sign + i, b.hi + i, b.lo + i};
    total += scalar::log_dot(ta, tb, n - i);
  }
  return total;
}

}  // namespace exion::simd::neon
