#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "exion/qtensor.hpp"

// Eager prediction: log-domain approximate attention scores and the masks
// derived from them.
namespace exion::ep {

// Sign/magnitude operand approximated by its one or two highest set bits.
struct LogOperand {
  int sign = 0;            // -1, +1, or 0 for the zero flag
  int exp_count = 0;       // 0, 1 or 2
  int exps[2] = {0, 0};    // strictly decreasing bit positions

  bool is_zero() const noexcept { return sign == 0; }
  // Sum of 2^e over the detected positions (always <= |original|).
  uint64_t approx_magnitude() const noexcept;
  int64_t approx_value() const noexcept { return sign * static_cast<int64_t>(approx_magnitude()); }
};

struct EPConfig {
  int k = 8;
  int64_t theta_dom = std::numeric_limits<int64_t>::max();
  bool two_step = true;
};

// Leading-one position of x > 0: 2^p <= x < 2^(p+1).
int lod(uint64_t x);

// Two-step leading-one detection: the leading one, then the next set bit after
// clearing it.
LogOperand ts_lod(int64_t x);
// Classic single leading-one detection.
LogOperand lod_operand(int64_t x);
inline LogOperand encode(int64_t x, bool two_step) { return two_step ? ts_lod(x) : lod_operand(x); }

// Shift-and-OR product: the magnitude is the bitwise OR of the one-hot partial
// products 2^(ea+eb); sign is the product of signs.
int64_t log_mul(const LogOperand& a, const LogOperand& b);

// Row-major integer matrix of predicted scores.
struct ScoreMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int64_t> values;

  int64_t at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;
};

// Predicted product a (R x D) times b (D x C). Each term is log_mul of the
// encoded operands; terms accumulate by exact signed addition. Operands must
// be at most 16-bit.
ScoreMatrix approx_mmul(const QTensor& a, const QTensor& b, const EPConfig& cfg);

struct AttnMask {
  Bitmask keep;
  std::vector<std::size_t> onehot_rows;
  std::vector<std::size_t> skip_q_rows;
  std::vector<std::size_t> skip_kv_cols;
  int k = 0;
  int64_t theta_dom = 0;

  bool is_onehot(std::size_t row) const;
};

// Per row: if max - second_max > theta_dom, keep only the argmax (one-hot row);
// otherwise keep the top-k scores, ties to the lower column index.
AttnMask predict_attention_mask(const ScoreMatrix& score, const EPConfig& cfg);

struct ProjectionSkip {
  double q_skip_frac = 0.0;
  double kv_skip_frac = 0.0;
};

ProjectionSkip projection_skip_ratio(const AttnMask& mask);

}  // namespace exion::ep
