#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "exion/cfse.hpp"
#include "exion/qtensor.hpp"

// Inter-iteration output sparsity for the two FFN layers of a transformer
// block: a dense iteration computes everything and records which nonlinear
// outputs are large; sparse iterations recompute only those and push the
// change through the second layer onto the cached partial sum.
namespace exion::ffn {

enum class Nonlin { Gelu, Geglu };
const char* nonlin_name(Nonlin n);

struct FFNLayerPair {
  QTensor w1;  // D x H1 (H1 = H for GELU, 2H for GEGLU)
  QTensor b1;  // H1
  QTensor w2;  // H x C
  QTensor b2;  // C
  Nonlin nonlin = Nonlin::Gelu;
  int h_scale = 8;  // scale of the 12-bit nonlinear output fed to w2
  cfse::Mode mode = cfse::Mode::Table;

  std::size_t hidden() const noexcept;  // H, width of the nonlinear output
  void validate() const;
};

enum class Baseline {
  Running,  // h_prev/y_prev follow every sparse iteration
  Frozen,   // h_prev/y_prev stay at the dense iteration's values
};

struct ReuseCache {
  QTensor h_prev;  // R x H, 12-bit at h_scale
  QTensor y_prev;  // R x C, 32-bit at h_scale + w2.scale
  Bitmask mask;    // 1 = recompute every iteration
  int64_t tau = 0;
  Baseline baseline = Baseline::Running;
};

// Output-sparse first-layer MMUL. The default is exion::mmul_masked; the
// simulator plugs in the merged-tile executor.
using MaskedMmul = std::function<MaskedProduct(const QTensor& a, const QTensor& w, const Bitmask& mask)>;

struct DenseResult {
  QTensor y;  // 32-bit, scale h_scale + w2.scale
  QTensor h;  // 12-bit nonlinear output
  ReuseCache cache;
};

// mask[i][j] = |h[i][j]| > tau. A negative tau marks everything.
Bitmask reuse_mask(const QTensor& h, int64_t tau);

// First layer, nonlinearity and requantization of h, without the second layer.
QTensor hidden_dense(const QTensor& x, const FFNLayerPair& layers);

DenseResult run_dense_iter(const QTensor& x, const FFNLayerPair& layers, int64_t tau,
                           Baseline baseline = Baseline::Running);

struct SparseStats {
  std::size_t first_layer_macs = 0;   // executed first-layer MACs
  std::size_t second_layer_macs = 0;  // executed second-layer MACs
  std::size_t nonlin_evals = 0;       // nonlinear outputs recomputed
};

// Mask expanded to the first layer's output columns (identity for GELU, the
// value and gate halves for GEGLU).
Bitmask first_layer_mask(const Bitmask& hidden_mask, Nonlin nonlin);

QTensor run_sparse_iter(const QTensor& x, const FFNLayerPair& layers, ReuseCache& cache,
                        const MaskedMmul& first_layer = {}, SparseStats* stats = nullptr);

enum class IterKind { Dense, Sparse };

// Repeating [1 dense, n sparse] truncated at `total`.
std::vector<IterKind> schedule(int total, int n);

// Flattened cosine similarity; throws ContractError on a zero-norm input.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const QTensor& a, const QTensor& b);

}  // namespace exion::ffn
