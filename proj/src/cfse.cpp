#include "exion/cfse.hpp"

#include <array>
#include <cmath>
#include <string>

#include "exion/error.hpp"

namespace exion::cfse {

namespace {

// GELU table: 257 breakpoints over [-8, 8] with step 1/16, int16 at scale 11.
constexpr int kGeluTableScale = 11;
constexpr int kGeluStepLog2 = 4;
constexpr int kGeluRange = 8;
constexpr int kGeluPoints = 2 * kGeluRange * (1 << kGeluStepLog2) + 1;

// exp table: 257 breakpoints over [-16, 0] with step 1/16, at scale 15.
constexpr int kExpTableScale = 15;
constexpr int kExpStepLog2 = 4;
constexpr int kExpRange = 16;
constexpr int kExpPoints = kExpRange * (1 << kExpStepLog2) + 1;

// Fixed-point argument scale used for table indexing.
constexpr int kArgScale = 16;

double gelu_ref(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

const std::array<int16_t, kGeluPoints>& gelu_table() {
  static const auto table = [] {
    std::array<int16_t, kGeluPoints> t{};
    for (int i = 0; i < kGeluPoints; ++i) {
      const double x = -kGeluRange + std::ldexp(static_cast<double>(i), -kGeluStepLog2);
      t[static_cast<std::size_t>(i)] = static_cast<int16_t>(std::lround(std::ldexp(gelu_ref(x), kGeluTableScale)));
    }
    return t;
  }();
  return table;
}

const std::array<int32_t, kExpPoints>& exp_table() {
  static const auto table = [] {
    std::array<int32_t, kExpPoints> t{};
    for (int i = 0; i < kExpPoints; ++i) {
      const double x = -kExpRange + std::ldexp(static_cast<double>(i), -kExpStepLog2);
      t[static_cast<std::size_t>(i)] = static_cast<int32_t>(std::lround(std::ldexp(std::exp(x), kExpTableScale)));
    }
    return t;
  }();
  return table;
}

// Linear interpolation between table[idx] and table[idx + 1] with a
// frac_bits-wide fraction.
template <typename Table>
int64_t interpolate(const Table& table, int64_t offset, int frac_bits) {
  const auto idx = static_cast<std::size_t>(offset >> frac_bits);
  const int64_t frac = offset & ((int64_t{1} << frac_bits) - 1);
  const int64_t y0 = table[idx];
  if (idx + 1 >= table.size()) return y0;
  const int64_t y1 = table[idx + 1];
  return y0 + shift_round((y1 - y0) * frac, frac_bits);
}

int32_t to_out16(double real, int out_scale) {
  return static_cast<int32_t>(saturate(std::llround(std::ldexp(real, out_scale)), 16));
}

}  // namespace

const char* function_name(Function fn) {
  switch (fn) {
    case Function::Softmax: return "softmax";
    case Function::LayerNorm: return "layernorm";
    case Function::Gelu: return "gelu";
    case Function::Geglu: return "geglu";
    case Function::Residual: return "residual";
  }
  return "unknown";
}

int32_t gelu(int64_t z, int in_scale, int out_scale, Mode mode) {
  if (mode == Mode::Reference) return to_out16(gelu_ref(std::ldexp(static_cast<double>(z), -in_scale)), out_scale);

  const int64_t x = shift_round(z, in_scale - kArgScale);
  const int64_t lo = -(int64_t{kGeluRange} << kArgScale);
  if (x <= lo) return 0;
  if (x >= -lo) return static_cast<int32_t>(saturate(shift_round(x, kArgScale - out_scale), 16));
  const int64_t y = interpolate(gelu_table(), x - lo, kArgScale - kGeluStepLog2);
  return static_cast<int32_t>(saturate(shift_round(y, kGeluTableScale - out_scale), 16));
}

int32_t geglu(int64_t value, int64_t gate, int in_scale, int out_scale, Mode mode) {
  if (mode == Mode::Reference) {
    const double v = std::ldexp(static_cast<double>(value), -in_scale);
    const double g = std::ldexp(static_cast<double>(gate), -in_scale);
    return to_out16(v * gelu_ref(g), out_scale);
  }
  // GELU(gate) at 16-bit scale 11, then the product rescaled once.
  const int64_t g = gelu(gate, in_scale, kGeluTableScale, Mode::Table);
  return static_cast<int32_t>(saturate(shift_round(value * g, in_scale + kGeluTableScale - out_scale), 16));
}

QTensor gelu(const QTensor& z, int out_scale, Mode mode) {
  std::vector<int32_t> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = gelu(z.at(i), z.scale(), out_scale, mode);
  return QTensor(z.shape(), 16, out_scale, std::move(out));
}

QTensor geglu(const QTensor& z, int out_scale, Mode mode) {
  if (z.rank() != 2 || z.cols() % 2 != 0) throw ContractError("geglu: expects R x 2H input");
  const std::size_t r = z.rows(), h = z.cols() / 2;
  std::vector<int32_t> out(r * h);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < h; ++j) out[i * h + j] = geglu(z.at(i, j), z.at(i, h + j), z.scale(), out_scale, mode);
  }
  return QTensor({r, h}, 16, out_scale, std::move(out));
}

QTensor softmax_rows(const QTensor& scores, const Bitmask& keep, double multiplier, int out_scale, Mode mode) {
  if (scores.rank() != 2) throw ContractError("softmax_rows: rank-2 input required");
  if (out_scale > 14) throw ContractError("softmax_rows: out_scale must be <= 14 for a 16-bit 1.0");
  const bool all = keep.size() == 0;
  if (!all && (keep.rows() != scores.rows() || keep.cols() != scores.cols())) {
    throw ContractError("softmax_rows: keep mask extent mismatch");
  }
  const std::size_t r = scores.rows(), c = scores.cols();
  const int64_t mult_q = std::llround(std::ldexp(multiplier, kArgScale));
  std::vector<int32_t> out(r * c, 0);
  std::vector<int64_t> e(c);
  for (std::size_t i = 0; i < r; ++i) {
    const auto kept = [&](std::size_t j) { return all || keep.get(i, j); };
    bool any = false;
    int64_t mx = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!kept(j)) continue;
      if (!any || scores.at(i, j) > mx) mx = scores.at(i, j);
      any = true;
    }
    if (!any) continue;

    if (mode == Mode::Reference) {
      double sum = 0.0;
      std::vector<double> ex(c, 0.0);
      for (std::size_t j = 0; j < c; ++j) {
        if (!kept(j)) continue;
        ex[j] = std::exp(std::ldexp(static_cast<double>(scores.at(i, j) - mx), -scores.scale()) * multiplier);
        sum += ex[j];
      }
      for (std::size_t j = 0; j < c; ++j) {
        if (kept(j)) out[i * c + j] = to_out16(ex[j] / sum, out_scale);
      }
      continue;
    }

    int64_t sum = 0;
    const int64_t lo = -(int64_t{kExpRange} << kArgScale);
    for (std::size_t j = 0; j < c; ++j) {
      e[j] = 0;
      if (!kept(j)) continue;
      const int64_t arg = shift_round((scores.at(i, j) - mx) * mult_q, scores.scale());
      e[j] = arg <= lo ? 0 : interpolate(exp_table(), arg - lo, kArgScale - kExpStepLog2);
      sum += e[j];
    }
    for (std::size_t j = 0; j < c; ++j) {
      if (!kept(j)) continue;
      const int64_t num = e[j] << out_scale;
      out[i * c + j] = static_cast<int32_t>(saturate((num + sum / 2) / sum, 16));
    }
  }
  return QTensor(scores.shape(), 16, out_scale, std::move(out));
}

QTensor layernorm_rows(const QTensor& x, int out_scale, Mode mode) {
  if (x.rank() != 2) throw ContractError("layernorm_rows: rank-2 input required");
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<int32_t> out(r * c, 0);
  for (std::size_t i = 0; i < r; ++i) {
    const auto row = x.row(i);
    if (mode == Mode::Reference) {
      double mean = 0.0;
      for (auto v : row) mean += v;
      mean /= static_cast<double>(c);
      double var = 0.0;
      for (auto v : row) var += (v - mean) * (v - mean);
      var /= static_cast<double>(c);
      if (var == 0.0) continue;
      const double inv = 1.0 / std::sqrt(var);
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] = to_out16((row[j] - mean) * inv, out_scale);
      continue;
    }
    // Mean and variance at scale s*c; the normalized value is scale-free.
    int64_t sum = 0;
    for (auto v : row) sum += v;
    const auto n = static_cast<int64_t>(c);
    int64_t var_n2 = 0;  // sum of (n*x - sum)^2, i.e. n^3 * var
    for (auto v : row) {
      const int64_t d = n * v - sum;
      var_n2 += d * d;
    }
    if (var_n2 == 0) continue;
    // (x - mean) / std = (n*x - sum) / sqrt(var_n2 / n).
    const double denom = std::sqrt(static_cast<double>(var_n2) / static_cast<double>(n));
    const int64_t inv_q = std::llround(std::ldexp(1.0 / denom, out_scale + kArgScale));
    for (std::size_t j = 0; j < c; ++j) {
      const int64_t d = n * row[j] - sum;
      out[i * c + j] = static_cast<int32_t>(saturate(shift_round(d * inv_q, kArgScale), 16));
    }
  }
  return QTensor(x.shape(), 16, out_scale, std::move(out));
}

QTensor residual(const QTensor& a, const QTensor& b, int bits) { return add_saturating(a, b, bits); }

}  // namespace exion::cfse
