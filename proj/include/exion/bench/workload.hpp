#pragma once

#include <cstdint>
#include <vector>

#include "exion/ffn_reuse.hpp"
#include "exion/qtensor.hpp"

// Seeded toy diffusion network: a stack of pre-norm transformer blocks driven
// by x <- x - step_size * Net(x).
namespace exion::bench {

// Fixed-point formats shared by the workload and trace replay.
inline constexpr int kActBits = 12;
inline constexpr int kActScale = 8;
inline constexpr int kWeightBits = 12;
inline constexpr int kWeightScale = 10;
inline constexpr int kProbScale = 10;  // attention probabilities fed to P.V

struct WorkloadSpec {
  int blocks = 4;
  int d_model = 64;
  int d_hidden = 256;
  int heads = 4;
  int tokens = 64;
  int iterations = 50;
  double step_size = 0.05;
  uint64_t seed = 1;
  ffn::Nonlin nonlin = ffn::Nonlin::Gelu;
  // Sharpness of the query/key projections and spread of the per-unit FFN
  // biases; both shape how sparse the masks come out.
  double qk_gain = 2.0;
  double ffn_bias_mean = -2.5;
  double ffn_bias_std = 3.0;

  // Throws ConfigError.
  void validate() const;
  int head_dim() const noexcept { return d_model / heads; }
};

struct BlockWeights {
  QTensor wq, wk, wv, wo;  // D x D
  ffn::FFNLayerPair ffn;
};

struct Workload {
  WorkloadSpec spec;
  std::vector<BlockWeights> blocks;
  QTensor x0;  // tokens x D at the activation format
};

Workload gen_workload(const WorkloadSpec& spec);

// FNV-1a over the little-endian bytes of the stored integers.
uint64_t checksum(const QTensor& t);

}  // namespace exion::bench
