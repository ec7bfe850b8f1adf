#include "exion/ffn_reuse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "exion/error.hpp"

namespace exion::ffn {

const char* nonlin_name(Nonlin n) { return n == Nonlin::Gelu ? "gelu" : "geglu"; }

std::size_t FFNLayerPair::hidden() const noexcept {
  return nonlin == Nonlin::Geglu ? w1.cols() / 2 : w1.cols();
}

void FFNLayerPair::validate() const {
  if (w1.rank() != 2 || w2.rank() != 2) throw ContractError("FFNLayerPair: weights must be rank-2");
  if (b1.size() != w1.cols()) throw ContractError("FFNLayerPair: b1 length != w1 columns");
  if (b2.size() != w2.cols()) throw ContractError("FFNLayerPair: b2 length != w2 columns");
  if (nonlin == Nonlin::Geglu && w1.cols() % 2 != 0) throw ContractError("FFNLayerPair: GEGLU needs an even width");
  if (hidden() != w2.rows()) {
    throw ContractError("FFNLayerPair: nonlinear width " + std::to_string(hidden()) + " != w2 rows " +
                        std::to_string(w2.rows()));
  }
}

Bitmask reuse_mask(const QTensor& h, int64_t tau) {
  Bitmask m(h.rows(), h.cols());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    for (std::size_t j = 0; j < h.cols(); ++j) m.set(i, j, std::llabs(h.at(i, j)) > tau);
  }
  return m;
}

Bitmask first_layer_mask(const Bitmask& hidden_mask, Nonlin nonlin) {
  if (nonlin == Nonlin::Gelu) return hidden_mask;
  const std::size_t r = hidden_mask.rows(), h = hidden_mask.cols();
  Bitmask m(r, 2 * h);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      if (hidden_mask.get(i, j)) {
        m.set(i, j);
        m.set(i, h + j);
      }
    }
  }
  return m;
}

namespace {

// Nonlinearity on the biased first-layer accumulator at one hidden position,
// requantized to 12 bits.
int32_t nonlin_at(const QTensor& z, std::size_t i, std::size_t j, const FFNLayerPair& layers) {
  int32_t v = 0;
  if (layers.nonlin == Nonlin::Gelu) {
    v = cfse::gelu(z.at(i, j), z.scale(), layers.h_scale, layers.mode);
  } else {
    const std::size_t h = layers.hidden();
    v = cfse::geglu(z.at(i, j), z.at(i, h + j), z.scale(), layers.h_scale, layers.mode);
  }
  return static_cast<int32_t>(saturate(v, 12));
}

}  // namespace

QTensor hidden_dense(const QTensor& x, const FFNLayerPair& layers) {
  layers.validate();
  const QTensor z = add_row_bias(mmul_dense(x, layers.w1), layers.b1);
  const std::size_t r = z.rows(), h = layers.hidden();
  std::vector<int32_t> out(r * h);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < h; ++j) out[i * h + j] = nonlin_at(z, i, j, layers);
  }
  return QTensor({r, h}, 12, layers.h_scale, std::move(out));
}

DenseResult run_dense_iter(const QTensor& x, const FFNLayerPair& layers, int64_t tau, Baseline baseline) {
  QTensor h = hidden_dense(x, layers);
  QTensor y = add_row_bias(mmul_dense(h, layers.w2), layers.b2);
  ReuseCache cache{h, y, reuse_mask(h, tau), tau, baseline};
  return {std::move(y), std::move(h), std::move(cache)};
}

QTensor run_sparse_iter(const QTensor& x, const FFNLayerPair& layers, ReuseCache& cache,
                        const MaskedMmul& first_layer, SparseStats* stats) {
  layers.validate();
  const std::size_t r = x.rows(), h = layers.hidden();
  if (cache.mask.rows() != r || cache.mask.cols() != h || cache.h_prev.rows() != r || cache.h_prev.cols() != h) {
    throw ContractError("run_sparse_iter: cache does not match layer shapes");
  }

  const Bitmask z_mask = first_layer_mask(cache.mask, layers.nonlin);
  MaskedProduct z_part = first_layer ? first_layer(x, layers.w1, z_mask) : mmul_masked(x, layers.w1, z_mask);
  if (!(z_part.produced == z_mask)) throw ConsistencyError("run_sparse_iter: first layer did not produce its mask");
  const QTensor z = add_row_bias(z_part.values, layers.b1);

  std::vector<int32_t> delta(r * h, 0);
  std::vector<int32_t> h_new(cache.h_prev.data().begin(), cache.h_prev.data().end());
  std::size_t nnz = 0;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      if (!cache.mask.get(i, j)) continue;
      const int32_t v = nonlin_at(z, i, j, layers);
      delta[i * h + j] = v - cache.h_prev.at(i, j);
      h_new[i * h + j] = v;
      ++nnz;
    }
  }
  // Differences of two 12-bit values need 13 bits; carried in a 16-bit operand.
  const QTensor d({r, h}, 16, layers.h_scale, std::move(delta));
  QTensor y = add_checked(cache.y_prev, mmul_dense(d, layers.w2));

  if (stats != nullptr) {
    const std::size_t per = layers.nonlin == Nonlin::Geglu ? 2 : 1;
    stats->first_layer_macs += nnz * per * x.cols();
    stats->second_layer_macs += nnz * layers.w2.cols();
    stats->nonlin_evals += nnz;
  }
  if (cache.baseline == Baseline::Running) {
    cache.h_prev = QTensor({r, h}, 12, layers.h_scale, std::move(h_new));
    cache.y_prev = y;
  }
  return y;
}

std::vector<IterKind> schedule(int total, int n) {
  if (total < 1) throw ContractError("schedule: total must be >= 1");
  if (n < 0) throw ContractError("schedule: n must be >= 0");
  std::vector<IterKind> out;
  out.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) out.push_back(i % (n + 1) == 0 ? IterKind::Dense : IterKind::Sparse);
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("cosine_similarity: shape mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw ContractError("cosine_similarity: undefined for a zero-norm input");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine_similarity(const QTensor& a, const QTensor& b) {
  if (a.shape() != b.shape()) throw ContractError("cosine_similarity: shape mismatch");
  return cosine_similarity(dequantize(a), dequantize(b));
}

}  // namespace exion::ffn
