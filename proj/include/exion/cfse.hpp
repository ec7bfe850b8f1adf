#pragma once

#include <cstdint>

#include "exion/qtensor.hpp"

// Special functions evaluated in fixed point: layer normalization, softmax,
// GELU/GEGLU and residual addition. Table mode uses 16-bit piecewise-linear
// tables; Reference mode evaluates in double precision and rounds once.
namespace exion::cfse {

enum class Mode { Table, Reference };
enum class Function { Softmax, LayerNorm, Gelu, Geglu, Residual };

const char* function_name(Function fn);

// Table mode max abs error against the double reference, in real units.
inline constexpr double kGeluTableTolerance = 1.0 / 64.0;

// GELU of a fixed-point value z * 2^-in_scale, returned at out_scale and
// saturated to 16 bits.
int32_t gelu(int64_t z, int in_scale, int out_scale, Mode mode);
// value * GELU(gate), both at in_scale.
int32_t geglu(int64_t value, int64_t gate, int in_scale, int out_scale, Mode mode);

QTensor gelu(const QTensor& z, int out_scale, Mode mode);
// z is R x 2H: columns [0, H) are values, [H, 2H) are gates.
QTensor geglu(const QTensor& z, int out_scale, Mode mode);

// Row softmax over positions with keep=1 (all positions when keep is empty).
// Inputs are scores at in_scale multiplied by `multiplier` before
// exponentiation. Output is 16-bit at out_scale (<= 14); masked-out positions
// and rows with no kept element are zero.
QTensor softmax_rows(const QTensor& scores, const Bitmask& keep, double multiplier, int out_scale, Mode mode);

// Row layer normalization without affine parameters. Zero-variance rows map to
// zeros. Output is 16-bit at out_scale.
QTensor layernorm_rows(const QTensor& x, int out_scale, Mode mode);

// Saturating residual addition at a common scale.
QTensor residual(const QTensor& a, const QTensor& b, int bits);

}  // namespace exion::cfse
