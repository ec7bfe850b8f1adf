#include "exion/bench/workload.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "exion/error.hpp"

namespace exion::bench {

void WorkloadSpec::validate() const {
  const auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("workload: ") + what);
  };
  need(blocks >= 1, "blocks must be >= 1");
  need(d_model >= 1 && tokens >= 1 && heads >= 1, "dims must be positive");
  need(d_model % heads == 0, "d_model must be divisible by heads");
  need(d_hidden >= d_model, "d_hidden must be >= d_model");
  need(iterations >= 1, "iterations must be >= 1");
  need(step_size >= 0.0 && step_size <= 1.0, "step_size must be in [0, 1]");
  need(qk_gain > 0.0, "qk_gain must be positive");
  need(ffn_bias_std >= 0.0, "ffn_bias_std must be non-negative");
}

namespace {

std::vector<double> normal(std::mt19937_64& rng, std::size_t n, double stddev, double mean = 0.0) {
  std::normal_distribution<double> dist(mean, stddev);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

QTensor to_fixed(std::vector<double> v, Shape shape, int bits, int scale) {
  const double lim = std::ldexp(static_cast<double>((int64_t{1} << (bits - 1)) - 1), -scale);
  for (auto& x : v) x = std::clamp(x, -lim, lim);
  return quantize(v, shape, bits, scale);
}

QTensor gaussian(std::mt19937_64& rng, Shape shape, double stddev, double mean, int bits, int scale) {
  auto v = normal(rng, element_count(shape), stddev, mean);
  return to_fixed(std::move(v), std::move(shape), bits, scale);
}

}  // namespace

Workload gen_workload(const WorkloadSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto d = static_cast<std::size_t>(spec.d_model);
  const auto h = static_cast<std::size_t>(spec.d_hidden);
  const auto h1 = spec.nonlin == ffn::Nonlin::Geglu ? 2 * h : h;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));

  Workload w;
  w.spec = spec;
  for (int b = 0; b < spec.blocks; ++b) {
    BlockWeights bw;
    bw.wq = gaussian(rng, {d, d}, spec.qk_gain * sd, 0.0, kWeightBits, kWeightScale);
    bw.wk = gaussian(rng, {d, d}, spec.qk_gain * sd, 0.0, kWeightBits, kWeightScale);
    bw.wv = gaussian(rng, {d, d}, sd, 0.0, kWeightBits, kWeightScale);
    bw.wo = gaussian(rng, {d, d}, sd, 0.0, kWeightBits, kWeightScale);
    bw.ffn.w1 = gaussian(rng, {d, h1}, sd, 0.0, kWeightBits, kWeightScale);
    bw.ffn.b1 = gaussian(rng, {h1}, spec.ffn_bias_std, spec.ffn_bias_mean, 16, kWeightScale);
    bw.ffn.w2 = gaussian(rng, {h, d}, 1.0 / std::sqrt(static_cast<double>(h)), 0.0, kWeightBits, kWeightScale);
    bw.ffn.b2 = QTensor::zeros({d}, 16, kWeightScale);
    bw.ffn.nonlin = spec.nonlin;
    bw.ffn.h_scale = kActScale;
    bw.ffn.validate();
    w.blocks.push_back(std::move(bw));
  }
  w.x0 = gaussian(rng, {static_cast<std::size_t>(spec.tokens), d}, 1.0, 0.0, kActBits, kActScale);
  return w;
}

uint64_t checksum(const QTensor& t) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (const int32_t v : t.data()) {
    const auto u = static_cast<uint32_t>(v);
    for (int i = 0; i < 4; ++i) {
      hash ^= (u >> (8 * i)) & 0xffU;
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

}  // namespace exion::bench
