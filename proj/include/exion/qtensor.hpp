#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace exion {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);

// Per-tensor power-of-two fixed-point integer tensor.
// Real value of element i is data[i] * 2^-scale. Every stored integer fits in
// `bits` signed bits; the constructor enforces it.
class QTensor {
 public:
  QTensor() = default;
  QTensor(Shape shape, int bits, int scale, std::vector<int32_t> data);

  static QTensor zeros(Shape shape, int bits, int scale);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  // Rank-2 extents. A rank-1 tensor is viewed as a single row.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  int bits() const noexcept { return bits_; }
  int scale() const noexcept { return scale_; }

  std::span<const int32_t> data() const noexcept { return data_; }
  std::span<const int32_t> row(std::size_t r) const;
  int32_t at(std::size_t i) const { return data_[i]; }
  int32_t at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  int32_t min_value() const noexcept;
  int32_t max_value() const noexcept;

  friend bool operator==(const QTensor&, const QTensor&) = default;

 private:
  Shape shape_;
  int bits_ = 12;
  int scale_ = 0;
  std::vector<int32_t> data_;
};

// Row-major boolean mask over an output matrix. 1 = element must be computed.
class Bitmask {
 public:
  Bitmask() = default;
  Bitmask(std::size_t rows, std::size_t cols, bool fill = false);
  Bitmask(std::size_t rows, std::size_t cols, std::vector<uint8_t> bits);

  static Bitmask ones(std::size_t rows, std::size_t cols) { return {rows, cols, true}; }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool get(std::size_t r, std::size_t c) const { return bits_[r * cols_ + c] != 0; }
  void set(std::size_t r, std::size_t c, bool v = true) { bits_[r * cols_ + c] = v ? 1 : 0; }

  std::size_t nnz() const noexcept;
  double density() const noexcept;
  double sparsity() const noexcept;

  std::span<const uint8_t> bits() const noexcept { return bits_; }

  friend bool operator==(const Bitmask&, const Bitmask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<uint8_t> bits_;
};

struct MaskStats {
  std::size_t nnz = 0;
  double density = 0.0;
  double sparsity = 1.0;
  std::vector<std::size_t> per_column_nnz;
  std::vector<std::size_t> per_row_nnz;
};

MaskStats mask_stats(const Bitmask& m);

// Round-half-away-from-zero of v * 2^scale. Throws RangeError naming the
// offending flat index when the result does not fit `bits`.
QTensor quantize(std::span<const double> values, const Shape& shape, int bits, int scale);
std::vector<double> dequantize(const QTensor& t);

// Rescale to (bits, scale) with round-half-away-from-zero, saturating to the
// target range. Used on the activation path after MMUL accumulation.
QTensor requantize(const QTensor& t, int bits, int scale);

// Integer shift with round-half-away-from-zero; positive `shift` divides.
int64_t shift_round(int64_t v, int shift);
int64_t saturate(int64_t v, int bits);
bool fits_bits(int64_t v, int bits);

// Bit-exact dense integer GEMM: 32-bit accumulation with overflow checking,
// result scale = a.scale + w.scale. Operands must be at most 16 bits wide.
// This is the ground truth every sparse and merged execution path is checked
// against.
QTensor mmul_dense(const QTensor& a, const QTensor& w);

// Elementwise add with checked 32-bit result; scales must match.
QTensor add_checked(const QTensor& a, const QTensor& b);
// Elementwise add saturating to `bits`; scales must match.
QTensor add_saturating(const QTensor& a, const QTensor& b, int bits);

// Adds a rank-1 bias to every row of a 32-bit accumulator tensor. The bias is
// shifted to the accumulator scale first.
QTensor add_row_bias(const QTensor& acc, const QTensor& bias);

QTensor transpose(const QTensor& t);
// Column slice [begin, begin + count) of a rank-2 tensor.
QTensor column_slice(const QTensor& t, std::size_t begin, std::size_t count);
QTensor row_slice(const QTensor& t, std::size_t begin, std::size_t count);

// Operand packing for the dot-product kernels. Requires bits <= 16.
std::vector<int16_t> pack_rows(const QTensor& a);
std::vector<int16_t> pack_columns(const QTensor& w);

// Output of an output-sparse MMUL: values at mask positions, zero elsewhere.
struct MaskedProduct {
  QTensor values;
  Bitmask produced;
};

// Reference output-sparse MMUL: one dot product per mask=1 element.
MaskedProduct mmul_masked(const QTensor& a, const QTensor& w, const Bitmask& mask);

}  // namespace exion
