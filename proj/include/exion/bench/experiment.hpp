#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "exion/archsim.hpp"
#include "exion/bench/trace.hpp"
#include "exion/bench/workload.hpp"
#include "exion/conmerge.hpp"
#include "exion/ffn_reuse.hpp"

namespace exion::bench {

enum class Config { Base, EP, FFNR, All };

const char* config_name(Config c);
// Accepts base, ep, ffnr, all (case-insensitive). Throws ConfigError.
Config parse_config(std::string_view s);
bool uses_ep(Config c);
bool uses_ffnr(Config c);

struct RunParams {
  // Reuse threshold on |h| in real units; negative marks every element.
  double tau = 1.0;
  int n_sparse = 4;
  int topk = 6;
  // Dominance margin on the predicted score in real units; infinity disables
  // one-hot rows.
  double theta_dom = 6.0;
  bool two_step = true;
  ffn::Baseline baseline = ffn::Baseline::Running;
  double mse_bound = 0.05;

  void validate(Config c, int tokens) const;
  int64_t tau_int(int h_scale) const;
  int64_t theta_int(int score_scale) const;
};

struct LayerReport {
  std::string name;
  double mask_sparsity = 0.0;  // mean over the iterations that apply a mask
  cm::CompactionStats compaction;
  arch::CycleStats cycles;
  arch::EnergyStats energy;
};

struct RunReport {
  Config config = Config::Base;
  WorkloadSpec spec;
  RunParams params;
  bool trace_replay = false;
  std::vector<LayerReport> layers;
  cm::CompactionStats compaction;
  arch::CycleStats cycles;
  arch::EnergyStats energy;
  uint64_t checksum = 0;
  double ffn_mask_sparsity = 0.0;
  double attn_mask_sparsity = 0.0;
  double adjacent_cosine_mean = 0.0;
  double adjacent_cosine_min = 0.0;
  std::optional<double> rel_mse_vs_base;
  std::optional<double> speedup_vs_base;
  std::optional<double> energy_ratio_vs_base;
  std::vector<int32_t> output;  // final activations, not serialized
};

double relative_mse(std::span<const int32_t> out, std::span<const int32_t> ref);

// Fills the *_vs_base fields from a Base run of the same workload.
void compare_to_base(RunReport& r, const RunReport& base);

// Called with the normalized input of every FFN layer (iteration, block, input).
using FfnInputHook = std::function<void(int, std::size_t, const QTensor&)>;

RunReport run_experiment(const Workload& w, Config config, const arch::ArchConfig& arch, const RunParams& params,
                         const FfnInputHook& hook = {});

// key = value lines for RunParams (tau, n_sparse, topk, theta_dom, two_step,
// baseline, mse_bound); '#' starts a comment. Throws ConfigError.
RunParams parse_run_params(std::string_view text, const std::string& source = "<string>",
                           RunParams defaults = {});
RunParams load_run_params(const std::string& path, RunParams defaults = {});

// FFN-only replay of [W1, W2, X_0 .. X_{T-1}] (all i12). Base and FFNR only.
RunReport replay_trace(const std::vector<TraceTensor>& tensors, Config config, const arch::ArchConfig& arch,
                       const RunParams& params);

struct SweepGrid {
  std::vector<double> tau;
  std::vector<int> n_sparse;
  std::vector<int> topk;
  std::vector<double> theta_dom;
};

struct SweepPoint {
  double tau = 0.0;
  int n_sparse = 0;
  int topk = 0;
  double theta_dom = 0.0;
  RunReport report;
};

// Grid points in lexicographic (tau, n_sparse, topk, theta_dom) order. Each
// report is compared against one shared Base run.
std::vector<SweepPoint> sweep(const Workload& w, Config config, const arch::ArchConfig& arch, const RunParams& base,
                              const SweepGrid& grid);

}  // namespace exion::bench
