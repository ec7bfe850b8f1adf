#include <vector>

#include "doctest.h"
#include "exion/epredict.hpp"
#include "exion/qtensor.hpp"
#include "exion/simd/kernels.hpp"
#include "support.hpp"

using namespace exion;

namespace {

std::vector<const simd::Kernels*> variants() {
  std::vector<const simd::Kernels*> out{&simd::scalar_kernels()};
  if (const auto* k = simd::avx2_kernels()) out.push_back(k);
  if (const auto* k = simd::neon_kernels()) out.push_back(k);
  return out;
}

struct LogVec {
  std::vector<int32_t> sign, hi, lo;
  simd::LogSpan span(std::size_t off = 0) const { return {sign.data() + off, hi.data() + off, lo.data() + off}; }
};

LogVec random_log(testing::Rng& rng, std::size_t n) {
  LogVec v;
  std::uniform_int_distribution<int> s(-1, 1), e(0, 15), missing(0, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const int32_t hi = e(rng);
    int32_t lo = hi > 0 ? std::uniform_int_distribution<int32_t>(0, hi - 1)(rng) : simd::kNoExp;
    if (missing(rng) == 0) lo = simd::kNoExp;
    v.sign.push_back(s(rng));
    v.hi.push_back(v.sign.back() == 0 ? simd::kNoExp : hi);
    v.lo.push_back(v.sign.back() == 0 ? simd::kNoExp : lo);
  }
  return v;
}

// Straight from the definition: OR of 2^(ea+eb) over present pairs, shift
// sums of 32 or more dropped.
int64_t log_dot_ref(const LogVec& a, const LogVec& b, std::size_t off, std::size_t n) {
  int64_t s = 0;
  for (std::size_t i = off; i < off + n; ++i) {
    const int sign = a.sign[i] * b.sign[i];
    if (sign == 0) continue;
    int64_t mag = 0;
    for (int32_t x : {a.hi[i], a.lo[i]}) {
      for (int32_t y : {b.hi[i], b.lo[i]}) {
        if (x == simd::kNoExp || y == simd::kNoExp || x + y >= 32) continue;
        mag |= int64_t{1} << (x + y);
      }
    }
    s += sign * mag;
  }
  return s;
}

}  // namespace

TEST_CASE("every compiled kernel variant matches the scalar reference") {
  INFO("variants: " << variants().size());
  testing::Rng rng(21);
  std::uniform_int_distribution<int> v16(-32768, 32767);
  for (const auto* k : variants()) {
    INFO("isa " << simd::isa_name(k->isa));
    for (int t = 0; t < 400; ++t) {
      const std::size_t n = testing::uniform(rng, 0, 300), off = testing::uniform(rng, 0, 3);
      std::vector<int16_t> a(n + off), b(n + off);
      for (auto& x : a) x = static_cast<int16_t>(v16(rng));
      for (auto& x : b) x = static_cast<int16_t>(v16(rng));
      if (t % 7 == 0) std::fill(a.begin(), a.end(), int16_t{-32768});
      if (t % 7 == 0) std::fill(b.begin(), b.end(), int16_t{-32768});
      int64_t ref = 0;
      for (std::size_t i = off; i < off + n; ++i) ref += int64_t{a[i]} * b[i];
      REQUIRE(k->dot_i16(a.data() + off, b.data() + off, n) == ref);
      REQUIRE(simd::scalar_kernels().dot_i16(a.data() + off, b.data() + off, n) == ref);

      const LogVec la = random_log(rng, n + off), lb = random_log(rng, n + off);
      REQUIRE(k->log_dot(la.span(off), lb.span(off), n) == log_dot_ref(la, lb, off, n));
    }
  }
}

TEST_CASE("kernel selection changes nothing observable") {
  testing::Rng rng(4);
  const QTensor a = testing::random_tensor(rng, 33, 47, 12), w = testing::random_tensor(rng, 47, 29, 12);
  const auto original = simd::kernels().isa;
  REQUIRE(simd::select(simd::Isa::Scalar));
  const QTensor ref = mmul_dense(a, w);
  const auto ref_scores = ep::approx_mmul(a, w, {});
  for (const auto* k : variants()) {
    REQUIRE(simd::select(k->isa));
    CHECK(mmul_dense(a, w) == ref);
    CHECK(ep::approx_mmul(a, w, {}) == ref_scores);
  }
  CHECK(simd::select(original));
  CHECK(simd::available(simd::Isa::Scalar));
}
