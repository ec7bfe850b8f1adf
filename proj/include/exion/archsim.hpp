#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "exion/cfse.hpp"
#include "exion/conmerge.hpp"
#include "exion/qtensor.hpp"

// Analytic cycle and energy model of the accelerator core. All DPUs of a tile
// run in lockstep, so a tile costs D + fill cycles regardless of occupancy;
// unoccupied slots only show up as gated energy.
namespace exion::arch {

enum class CfseMode { OneWay32, TwoWay16 };
const char* cfse_mode_name(CfseMode m);

struct EnergyConstants {
  double per_mac_pj = 0.2;
  double per_log_mac_pj = 0.02;  // shift/OR datapath of the prediction array
  double per_cfse_op_pj = 0.4;
  double per_sram_access_pj = 0.05;
  double per_dram_byte_pj = 10.0;
  double per_cau_cycle_pj = 0.5;
  double gated_idle_fraction = 0.1;
};

struct ArchConfig {
  int lanes = 16;
  int dpu_cols = 16;
  double clock_hz = 800e6;
  int imem_buffers = 2;
  int wmem_buffers = 3;
  uint64_t dram_bytes_per_cycle = 64;
  uint64_t dram_latency_cycles = 100;
  uint64_t pipeline_fill_cycles = 4;
  CfseMode cfse_mode = CfseMode::TwoWay16;
  int cfse_lanes = 16;
  uint64_t cau_alpha = 1;  // per column entering the sort pass
  uint64_t cau_beta = 16;  // per merge attempt
  uint64_t cau_gamma = 1;  // per conflict relocation
  EnergyConstants energy;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// key = value lines, '#' starts a comment. Unknown keys and malformed values
// are ConfigErrors that name the line.
ArchConfig parse_arch_config(std::string_view text, const std::string& source = "<string>");
ArchConfig load_arch_config(const std::string& path);
std::string to_config_text(const ArchConfig& cfg);

struct CycleStats {
  uint64_t sdue_cycles = 0;
  uint64_t cfse_cycles = 0;
  uint64_t epre_cycles = 0;
  uint64_t cau_cycles = 0;
  uint64_t dram_cycles = 0;
  uint64_t total_cycles = 0;
  uint64_t macs_executed = 0;
  uint64_t macs_skipped = 0;
  uint64_t log_macs = 0;
  uint64_t cfse_ops = 0;
  uint64_t sram_accesses = 0;
  uint64_t dram_bytes = 0;
  uint64_t tiles = 0;

  uint64_t parts_sum() const noexcept {
    return sdue_cycles + cfse_cycles + epre_cycles + cau_cycles + dram_cycles;
  }
  CycleStats& operator+=(const CycleStats& o);
  friend bool operator==(const CycleStats&, const CycleStats&) = default;
};

struct EnergyStats {
  double compute_pj = 0.0;
  double gated_pj = 0.0;
  double sram_pj = 0.0;
  double dram_pj = 0.0;
  double aux_pj = 0.0;  // prediction array, special-function unit and CAU
  double total_pj = 0.0;

  EnergyStats& operator+=(const EnergyStats& o);
};

struct TileCost {
  uint64_t cycles = 0;
  uint64_t slots = 0;           // lanes * dpu_cols
  uint64_t occupied_slots = 0;  // DPUs producing an output element
  double gated_pj = 0.0;        // idle slots for the whole tile duration
  uint64_t sram_accesses = 0;
};

TileCost sim_tile(const cm::MergedTile& tile, std::size_t d, const ArchConfig& cfg);
TileCost sim_dense_tile(std::size_t rows, std::size_t cols, std::size_t d, const ArchConfig& cfg);

// Weight bytes are counted at weight_bits per element; 0 means the right-hand
// operand is already on chip.
CycleStats sim_mmul_dense(std::size_t r, std::size_t c, std::size_t d, const ArchConfig& cfg, int weight_bits = 12);
CycleStats sim_mmul_sparse(const cm::ConMergeResult& plan, std::size_t r, std::size_t c, std::size_t d,
                           const ArchConfig& cfg, int weight_bits = 12);
// Left operand with zero entries (a reuse delta or pruned probabilities): each
// stripe streams only the inner indices some of its rows need.
CycleStats sim_mmul_inner_sparse(const Bitmask& lhs_nonzero, std::size_t c, const ArchConfig& cfg,
                                 int weight_bits = 12);

std::size_t cfse_ops_per_element(cfse::Function fn);
uint64_t cfse_cycles(cfse::Function fn, std::size_t elements, const ArchConfig& cfg);

struct CfseResult {
  QTensor out;
  CycleStats stats;
};
// Runs the function in table mode and reports its cost. Softmax uses all
// positions at multiplier 1; residual needs `other`.
CfseResult cfse_eval(cfse::Function fn, const QTensor& x, const ArchConfig& cfg, int out_scale,
                     const QTensor* other = nullptr);

uint64_t sim_epre(std::size_t r, std::size_t c, std::size_t d, const ArchConfig& cfg);
uint64_t sim_cau(std::size_t merge_attempts, std::size_t columns, std::size_t conflicts, const ArchConfig& cfg);
uint64_t sim_cau(const cm::CompactionStats& st, const ArchConfig& cfg);
uint64_t sim_dram(uint64_t bytes, const ArchConfig& cfg);

uint64_t weight_bytes(uint64_t elements, int bits);

enum class StageKind {
  // Prediction and mask compaction for the next stripe overlap execution of
  // the current one; weight streaming overlaps both.
  Pipelined,
  Serial,
};

// Fills dram_cycles from dram_bytes and sets total_cycles for one pipeline
// stage.
void close_stage(CycleStats& s, StageKind kind, const ArchConfig& cfg);

EnergyStats energy(const CycleStats& s, const ArchConfig& cfg);

}  // namespace exion::arch
