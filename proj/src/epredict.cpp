#include "exion/epredict.hpp"

#include <algorithm>
#include <bit>
#include <numeric>
#include <string>

#include "exion/error.hpp"
#include "exion/simd/kernels.hpp"

namespace exion::ep {

uint64_t LogOperand::approx_magnitude() const noexcept {
  uint64_t m = 0;
  for (int i = 0; i < exp_count; ++i) m += uint64_t{1} << exps[i];
  return m;
}

int lod(uint64_t x) {
  if (x == 0) throw ContractError("lod: zero has no leading one");
  return std::bit_width(x) - 1;
}

namespace {

uint64_t magnitude(int64_t x) {
  return x < 0 ? uint64_t{0} - static_cast<uint64_t>(x) : static_cast<uint64_t>(x);
}

}  // namespace

LogOperand lod_operand(int64_t x) {
  LogOperand op;
  if (x == 0) return op;
  op.sign = x < 0 ? -1 : 1;
  op.exps[0] = lod(magnitude(x));
  op.exp_count = 1;
  return op;
}

LogOperand ts_lod(int64_t x) {
  LogOperand op = lod_operand(x);
  if (op.is_zero()) return op;
  const uint64_t rest = magnitude(x) & ~(uint64_t{1} << op.exps[0]);
  if (rest != 0) {
    op.exps[1] = lod(rest);
    op.exp_count = 2;
  }
  return op;
}

int64_t log_mul(const LogOperand& a, const LogOperand& b) {
  if (a.is_zero() || b.is_zero()) return 0;
  uint64_t mag = 0;
  for (int i = 0; i < a.exp_count; ++i) {
    for (int j = 0; j < b.exp_count; ++j) mag |= uint64_t{1} << (a.exps[i] + b.exps[j]);
  }
  return a.sign * b.sign * static_cast<int64_t>(mag);
}

namespace {

// SoA encoding consumed by the log_dot kernel.
struct LogVectors {
  std::vector<int32_t> sign, hi, lo;

  explicit LogVectors(std::size_t n) : sign(n, 0), hi(n, simd::kNoExp), lo(n, simd::kNoExp) {}

  void put(std::size_t i, int64_t x, bool two_step) {
    const LogOperand op = encode(x, two_step);
    sign[i] = op.sign;
    hi[i] = op.exp_count > 0 ? op.exps[0] : simd::kNoExp;
    lo[i] = op.exp_count > 1 ? op.exps[1] : simd::kNoExp;
  }

  simd::LogSpan span(std::size_t offset) const {
    return {sign.data() + offset, hi.data() + offset, lo.data() + offset};
  }
};

}  // namespace

ScoreMatrix approx_mmul(const QTensor& a, const QTensor& b, const EPConfig& cfg) {
  if (a.rank() != 2 || b.rank() != 2) throw ContractError("approx_mmul: rank-2 operands required");
  if (a.cols() != b.rows()) throw ContractError("approx_mmul: inner dimensions disagree");
  if (a.bits() > 16 || b.bits() > 16) throw ContractError("approx_mmul: operands must be at most 16-bit");
  const std::size_t r = a.rows(), d = a.cols(), c = b.cols();

  LogVectors ea(r * d), eb(c * d);
  for (std::size_t i = 0; i < r * d; ++i) ea.put(i, a.at(i), cfg.two_step);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t j = 0; j < c; ++j) eb.put(j * d + k, b.at(k, j), cfg.two_step);
  }

  const auto& kern = simd::kernels();
  ScoreMatrix out{r, c, std::vector<int64_t>(r * c)};
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.values[i * c + j] = kern.log_dot(ea.span(i * d), eb.span(j * d), d);
  }
  return out;
}

bool AttnMask::is_onehot(std::size_t row) const {
  return std::binary_search(onehot_rows.begin(), onehot_rows.end(), row);
}

AttnMask predict_attention_mask(const ScoreMatrix& score, const EPConfig& cfg) {
  if (cfg.k < 1) throw ContractError("predict_attention_mask: k must be >= 1");
  if (cfg.theta_dom < 0) throw ContractError("predict_attention_mask: theta_dom must be >= 0");
  if (static_cast<std::size_t>(cfg.k) > score.cols && score.cols > 0) {
    throw ContractError("predict_attention_mask: k exceeds the column count");
  }
  AttnMask m;
  m.k = cfg.k;
  m.theta_dom = cfg.theta_dom;
  m.keep = Bitmask(score.rows, score.cols);
  if (score.cols == 0) return m;

  const auto k = static_cast<std::size_t>(cfg.k);
  std::vector<std::size_t> order(score.cols);
  for (std::size_t r = 0; r < score.rows; ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto by_score = [&](std::size_t x, std::size_t y) {
      const int64_t vx = score.at(r, x), vy = score.at(r, y);
      return vx != vy ? vx > vy : x < y;
    };
    const std::size_t need = std::min<std::size_t>(std::max<std::size_t>(k, 2), score.cols);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(need), order.end(), by_score);

    bool onehot = false;
    if (score.cols >= 2) {
      // Differences of int64 scores can exceed int64; compare in __int128.
      const __int128 gap = static_cast<__int128>(score.at(r, order[0])) - score.at(r, order[1]);
      onehot = gap > static_cast<__int128>(cfg.theta_dom);
    }
    if (onehot) {
      m.keep.set(r, order[0]);
      m.onehot_rows.push_back(r);
    } else {
      for (std::size_t i = 0; i < std::min(k, score.cols); ++i) m.keep.set(r, order[i]);
    }
  }
  m.skip_q_rows = m.onehot_rows;
  for (std::size_t c = 0; c < score.cols; ++c) {
    bool any = false;
    for (std::size_t r = 0; r < score.rows && !any; ++r) any = m.keep.get(r, c);
    if (!any) m.skip_kv_cols.push_back(c);
  }
  return m;
}

ProjectionSkip projection_skip_ratio(const AttnMask& mask) {
  ProjectionSkip s;
  if (mask.keep.rows() > 0) {
    s.q_skip_frac = static_cast<double>(mask.skip_q_rows.size()) / static_cast<double>(mask.keep.rows());
  }
  if (mask.keep.cols() > 0) {
    s.kv_skip_frac = static_cast<double>(mask.skip_kv_cols.size()) / static_cast<double>(mask.keep.cols());
  }
  return s;
}

}  // namespace exion::ep
