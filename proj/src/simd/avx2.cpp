// Compiled with -mavx2; only reached after a runtime CPU check.
#include <immintrin.h>

#include "scalar.hpp"

namespace exion::simd::avx2 {

namespace {

inline int64_t hsum_epi64(__m256i v) {
  const __m128i lo = _mm256_castsi256_si128(v);
  const __m128i hi = _mm256_extracti128_si256(v, 1);
  const __m128i s = _mm_add_epi64(lo, hi);
  return _mm_cvtsi128_si64(s) + _mm_extract_epi64(s, 1);
}

// Widen eight int32 lanes to int64 and add into acc.
inline __m256i add_widened(__m256i acc, __m256i v32) {
  acc = _mm256_add_epi64(acc, _mm256_cvtepi32_epi64(_mm256_castsi256_si128(v32)));
  return _mm256_add_epi64(acc, _mm256_cvtepi32_epi64(_mm256_extracti128_si256(v32, 1)));
}

}  // namespace

// Products of two int16 values fit in int32 (|p| <= 2^30), so each product is
// formed in 32-bit lanes and widened before accumulation. No pairwise add is
// done in 32 bits, which keeps the (-32768)^2 * 2 case exact.
int64_t dot_i16(const int16_t* a, const int16_t* b, std::size_t n) {
  __m256i acc = _mm256_setzero_si256();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + i));
    const __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + i));
    const __m256i a0 = _mm256_cvtepi16_epi32(_mm256_castsi256_si128(va));
    const __m256i b0 = _mm256_cvtepi16_epi32(_mm256_castsi256_si128(vb));
    const __m256i a1 = _mm256_cvtepi16_epi32(_mm256_extracti128_si256(va, 1));
    const __m256i b1 = _mm256_cvtepi16_epi32(_mm256_extracti128_si256(vb, 1));
    acc = add_widened(acc, _mm256_mullo_epi32(a0, b0));
    acc = add_widened(acc, _mm256_mullo_epi32(a1, b1));
  }
  int64_t total = hsum_epi64(acc);
  for (; i < n; ++i) total += int64_t{a[i]} * int64_t{b[i]};
  return total;
}

// sllv yields zero for shift counts above 31, which is exactly the kNoExp
// convention; sign_epi32 applies the product sign and zeroes zero operands.
int64_t log_dot(LogSpan a, LogSpan b, std::size_t n) {
  const __m256i one = _mm256_set1_epi32(1);
  __m256i acc = _mm256_setzero_si256();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const auto ld = [i](const int32_t* p) {
      return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p + i));
    };
    const __m256i ah = ld(a.hi), al = ld(a.lo), bh = ld(b.hi), bl = ld(b.lo);
    __m256i mag = _mm256_sllv_epi32(one, _mm256_add_epi32(ah, bh));
    mag = _mm256_or_si256(mag, _mm256_sllv_epi32(one, _mm256_add_epi32(ah, bl)));
    mag = _mm256_or_si256(mag, _mm256_sllv_epi32(one, _mm256_add_epi32(al, bh)));
    mag = _mm256_or_si256(mag, _mm256_sllv_epi32(one, _mm256_add_epi32(al, bl)));
    const __m256i s = _mm256_mullo_epi32(ld(a.sign), ld(b.sign));
    acc = add_widened(acc, _mm256_sign_epi32(mag, s));
  }
  int64_t total = hsum_epi64(acc);
  if (i < n) {
    const LogSpan ta{a.sign + i, a.hi + i, a.lo + i};
    const LogSpan tb{b.sign + i, b.hi + i, b.lo + i};
    total += scalar::log_dot(ta, tb, n - i);
  }
  return total;
}

}  // namespace exion::simd::avx2
