#include "exion/qtensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "exion/error.hpp"
#include "exion/simd/kernels.hpp"

namespace exion {

namespace {

std::string index_str(std::size_t r, std::size_t c) {
  return "(" + std::to_string(r) + ", " + std::to_string(c) + ")";
}

void require_rank2(const QTensor& t, const char* who) {
  if (t.rank() != 2) throw ContractError(std::string(who) + ": expected a rank-2 tensor");
}

void require_packable(const QTensor& t, const char* who) {
  if (t.bits() > 16) {
    throw ContractError(std::string(who) + ": operand is " + std::to_string(t.bits()) +
                        "-bit; MMUL operands must be at most 16-bit");
  }
}

}  // namespace

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

bool fits_bits(int64_t v, int bits) {
  const int64_t hi = (int64_t{1} << (bits - 1)) - 1;
  const int64_t lo = -(int64_t{1} << (bits - 1));
  return v >= lo && v <= hi;
}

int64_t saturate(int64_t v, int bits) {
  const int64_t hi = (int64_t{1} << (bits - 1)) - 1;
  const int64_t lo = -(int64_t{1} << (bits - 1));
  return std::clamp(v, lo, hi);
}

int64_t shift_round(int64_t v, int shift) {
  if (shift <= 0) return v * (int64_t{1} << (-shift));
  const int64_t half = int64_t{1} << (shift - 1);
  return v >= 0 ? (v + half) >> shift : -((-v + half) >> shift);
}

QTensor::QTensor(Shape shape, int bits, int scale, std::vector<int32_t> data)
    : shape_(std::move(shape)), bits_(bits), scale_(scale), data_(std::move(data)) {
  if (bits_ < 2 || bits_ > 32) throw ContractError("QTensor: bit-width must be in [2, 32]");
  if (element_count(shape_) != data_.size()) {
    throw ContractError("QTensor: shape holds " + std::to_string(element_count(shape_)) +
                        " elements but data has " + std::to_string(data_.size()));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!fits_bits(data_[i], bits_)) {
      throw RangeError("QTensor: element " + std::to_string(i) + " = " + std::to_string(data_[i]) +
                       " does not fit " + std::to_string(bits_) + " bits");
    }
  }
}

QTensor QTensor::zeros(Shape shape, int bits, int scale) {
  const std::size_t n = element_count(shape);
  return QTensor(std::move(shape), bits, scale, std::vector<int32_t>(n, 0));
}

std::size_t QTensor::rows() const noexcept {
  if (shape_.size() >= 2) return shape_[0];
  return shape_.empty() ? 0 : 1;
}

std::size_t QTensor::cols() const noexcept {
  if (shape_.size() >= 2) return shape_[1];
  return shape_.empty() ? 0 : shape_[0];
}

std::span<const int32_t> QTensor::row(std::size_t r) const {
  return std::span<const int32_t>(data_).subspan(r * cols(), cols());
}

int32_t QTensor::min_value() const noexcept {
  return data_.empty() ? 0 : *std::min_element(data_.begin(), data_.end());
}

int32_t QTensor::max_value() const noexcept {
  return data_.empty() ? 0 : *std::max_element(data_.begin(), data_.end());
}

Bitmask::Bitmask(std::size_t rows, std::size_t cols, bool fill)
    : rows_(rows), cols_(cols), bits_(rows * cols, fill ? 1 : 0) {}

Bitmask::Bitmask(std::size_t rows, std::size_t cols, std::vector<uint8_t> bits)
    : rows_(rows), cols_(cols), bits_(std::move(bits)) {
  if (bits_.size() != rows_ * cols_) throw ContractError("Bitmask: extent product != bit count");
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t Bitmask::nnz() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), uint8_t{1}));
}

double Bitmask::density() const noexcept {
  if (bits_.empty()) return 0.0;
  return static_cast<double>(nnz()) / static_cast<double>(bits_.size());
}

double Bitmask::sparsity() const noexcept { return 1.0 - density(); }

MaskStats mask_stats(const Bitmask& m) {
  MaskStats s;
  s.per_column_nnz.assign(m.cols(), 0);
  s.per_row_nnz.assign(m.rows(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (m.get(r, c)) {
        ++s.per_row_nnz[r];
        ++s.per_column_nnz[c];
        ++s.nnz;
      }
    }
  }
  s.density = m.density();
  s.sparsity = m.sparsity();
  return s;
}

QTensor quantize(std::span<const double> values, const Shape& shape, int bits, int scale) {
  if (bits != 12 && bits != 16 && bits != 32) {
    throw ContractError("quantize: bits must be 12, 16 or 32");
  }
  if (element_count(shape) != values.size()) throw ContractError("quantize: shape/value count mismatch");
  std::vector<int32_t> data(values.size());
  const double mult = std::ldexp(1.0, scale);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = values[i] * mult;
    // std::round is half-away-from-zero.
    const double q = std::round(x);
    if (!std::isfinite(q) || q > static_cast<double>((int64_t{1} << (bits - 1)) - 1) ||
        q < -static_cast<double>(int64_t{1} << (bits - 1))) {
      throw RangeError("quantize: element " + std::to_string(i) + " (" + std::to_string(values[i]) +
                       ") overflows " + std::to_string(bits) + "-bit at scale " + std::to_string(scale));
    }
    data[i] = static_cast<int32_t>(q);
  }
  return QTensor(shape, bits, scale, std::move(data));
}

std::vector<double> dequantize(const QTensor& t) {
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::ldexp(static_cast<double>(t.at(i)), -t.scale());
  return out;
}

QTensor requantize(const QTensor& t, int bits, int scale) {
  const int shift = t.scale() - scale;
  std::vector<int32_t> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    out[i] = static_cast<int32_t>(saturate(shift_round(t.at(i), shift), bits));
  }
  return QTensor(t.shape(), bits, scale, std::move(out));
}

std::vector<int16_t> pack_rows(const QTensor& a) {
  require_packable(a, "pack_rows");
  std::vector<int16_t> out(a.size());
  std::transform(a.data().begin(), a.data().end(), out.begin(),
                 [](int32_t v) { return static_cast<int16_t>(v); });
  return out;
}

std::vector<int16_t> pack_columns(const QTensor& w) {
  require_packable(w, "pack_columns");
  const std::size_t d = w.rows(), c = w.cols();
  std::vector<int16_t> out(d * c);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t j = 0; j < c; ++j) out[j * d + k] = static_cast<int16_t>(w.at(k, j));
  }
  return out;
}

QTensor mmul_dense(const QTensor& a, const QTensor& w) {
  require_rank2(a, "mmul_dense");
  require_rank2(w, "mmul_dense");
  if (a.cols() != w.rows()) {
    throw ContractError("mmul_dense: inner dimensions disagree (" + std::to_string(a.cols()) + " vs " +
                        std::to_string(w.rows()) + ")");
  }
  const std::size_t r = a.rows(), d = a.cols(), c = w.cols();
  const auto pa = pack_rows(a);
  const auto pw = pack_columns(w);
  const auto& k = simd::kernels();
  std::vector<int32_t> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const int64_t acc = k.dot_i16(pa.data() + i * d, pw.data() + j * d, d);
      if (!fits_bits(acc, 32)) throw RangeError("mmul_dense: 32-bit accumulator overflow at " + index_str(i, j));
      out[i * c + j] = static_cast<int32_t>(acc);
    }
  }
  return QTensor({r, c}, 32, a.scale() + w.scale(), std::move(out));
}

MaskedProduct mmul_masked(const QTensor& a, const QTensor& w, const Bitmask& mask) {
  require_rank2(a, "mmul_masked");
  require_rank2(w, "mmul_masked");
  if (a.cols() != w.rows()) throw ContractError("mmul_masked: inner dimensions disagree");
  if (mask.rows() != a.rows() || mask.cols() != w.cols()) throw ContractError("mmul_masked: mask extent mismatch");
  const std::size_t r = a.rows(), d = a.cols(), c = w.cols();
  const auto pa = pack_rows(a);
  const auto pw = pack_columns(w);
  const auto& k = simd::kernels();
  std::vector<int32_t> out(r * c, 0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      if (!mask.get(i, j)) continue;
      const int64_t acc = k.dot_i16(pa.data() + i * d, pw.data() + j * d, d);
      if (!fits_bits(acc, 32)) throw RangeError("mmul_masked: 32-bit accumulator overflow at " + index_str(i, j));
      out[i * c + j] = static_cast<int32_t>(acc);
    }
  }
  return {QTensor({r, c}, 32, a.scale() + w.scale(), std::move(out)), mask};
}

QTensor add_checked(const QTensor& a, const QTensor& b) {
  if (a.shape() != b.shape() || a.scale() != b.scale()) throw ContractError("add_checked: shape or scale mismatch");
  std::vector<int32_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int64_t v = int64_t{a.at(i)} + int64_t{b.at(i)};
    if (!fits_bits(v, 32)) throw RangeError("add_checked: overflow at element " + std::to_string(i));
    out[i] = static_cast<int32_t>(v);
  }
  return QTensor(a.shape(), 32, a.scale(), std::move(out));
}

QTensor add_saturating(const QTensor& a, const QTensor& b, int bits) {
  if (a.shape() != b.shape() || a.scale() != b.scale()) {
    throw ContractError("add_saturating: shape or scale mismatch");
  }
  std::vector<int32_t> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = static_cast<int32_t>(saturate(int64_t{a.at(i)} + int64_t{b.at(i)}, bits));
  }
  return QTensor(a.shape(), bits, a.scale(), std::move(out));
}

QTensor add_row_bias(const QTensor& acc, const QTensor& bias) {
  require_rank2(acc, "add_row_bias");
  if (bias.size() != acc.cols()) throw ContractError("add_row_bias: bias length != columns");
  std::vector<int64_t> b(bias.size());
  for (std::size_t j = 0; j < bias.size(); ++j) b[j] = shift_round(bias.at(j), bias.scale() - acc.scale());
  std::vector<int32_t> out(acc.size());
  for (std::size_t i = 0; i < acc.rows(); ++i) {
    for (std::size_t j = 0; j < acc.cols(); ++j) {
      const int64_t v = int64_t{acc.at(i, j)} + b[j];
      if (!fits_bits(v, 32)) throw RangeError("add_row_bias: overflow at " + index_str(i, j));
      out[i * acc.cols() + j] = static_cast<int32_t>(v);
    }
  }
  return QTensor(acc.shape(), 32, acc.scale(), std::move(out));
}

QTensor transpose(const QTensor& t) {
  require_rank2(t, "transpose");
  const std::size_t r = t.rows(), c = t.cols();
  std::vector<int32_t> out(t.size());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = t.at(i, j);
  }
  return QTensor({c, r}, t.bits(), t.scale(), std::move(out));
}

QTensor column_slice(const QTensor& t, std::size_t begin, std::size_t count) {
  require_rank2(t, "column_slice");
  if (begin + count > t.cols()) throw ContractError("column_slice: out of range");
  std::vector<int32_t> out(t.rows() * count);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = t.at(i, begin + j);
  }
  return QTensor({t.rows(), count}, t.bits(), t.scale(), std::move(out));
}

QTensor row_slice(const QTensor& t, std::size_t begin, std::size_t count) {
  require_rank2(t, "row_slice");
  if (begin + count > t.rows()) throw ContractError("row_slice: out of range");
  const auto first = t.data().begin() + static_cast<std::ptrdiff_t>(begin * t.cols());
  std::vector<int32_t> out(first, first + static_cast<std::ptrdiff_t>(count * t.cols()));
  return QTensor({count, t.cols()}, t.bits(), t.scale(), std::move(out));
}

}  // namespace exion
