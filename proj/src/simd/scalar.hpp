#pragma once

#include "exion/simd/kernels.hpp"

namespace exion::simd {

namespace scalar {
int64_t dot_i16(const int16_t* a, const int16_t* b, std::size_t n);
int64_t log_dot(LogSpan a, LogSpan b, std::size_t n);
}  // namespace scalar

namespace avx2 {
int64_t dot_i16(const int16_t* a, const int16_t* b, std::size_t n);
int64_t log_dot(LogSpan a, LogSpan b, std::size_t n);
}  // namespace avx2

namespace neon {
int64_t dot_i16(const int16_t* a, const int16_t* b, std::size_t n);
int64_t log_dot(LogSpan a, LogSpan b, std::size_t n);
}  // namespace neon

}  // namespace exion::simd
