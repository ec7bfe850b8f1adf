#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Inner-loop kernels with a scalar reference and ISA-specific variants picked
// at runtime. Every variant must return bit-identical results to the scalar
// one; tests/test_simd.cpp enforces this.
namespace exion::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

// Structure-of-arrays view of log-domain operands. sign is -1, 0 or +1; hi and
// lo are bit positions, with kNoExp marking an absent position. Any shift sum
// >= 32 contributes nothing.
inline constexpr int32_t kNoExp = 64;

struct LogSpan {
  const int32_t* sign;
  const int32_t* hi;
  const int32_t* lo;
};

struct Kernels {
  Isa isa;
  // Exact sum of a[i] * b[i] over int16 operands.
  int64_t (*dot_i16)(const int16_t* a, const int16_t* b, std::size_t n);
  // Sum over i of sign_a*sign_b * (OR of 2^(ea+eb) over exponent pairs).
  int64_t (*log_dot)(LogSpan a, LogSpan b, std::size_t n);
};

const Kernels& scalar_kernels();
// nullptr when the variant is not compiled in or the CPU lacks the ISA.
const Kernels* avx2_kernels();
const Kernels* neon_kernels();

bool available(Isa isa);

// Active kernel table. First use picks the best available ISA unless the
// EXION_SIMD environment variable names one (scalar, avx2, neon).
const Kernels& kernels();

// Forces a variant; returns false and leaves the selection unchanged when the
// variant is unavailable.
bool select(Isa isa);

}  // namespace exion::simd
