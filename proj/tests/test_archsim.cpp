#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "doctest.h"
#include "exion/archsim.hpp"
#include "exion/error.hpp"
#include "support.hpp"

using namespace exion;
using namespace exion::arch;

namespace {

uint64_t closed_form(std::size_t r, std::size_t c, std::size_t d, const ArchConfig& cfg) {
  const auto l = static_cast<uint64_t>(cfg.lanes), p = static_cast<uint64_t>(cfg.dpu_cols);
  return ((r + l - 1) / l) * ((c + p - 1) / p) * (d + cfg.pipeline_fill_cycles);
}

// Event-ordered schedule: each job occupies its unit for `cycles`, jobs on one
// unit run back to back, units run concurrently unless forced onto a single
// shared unit.
uint64_t event_schedule(const CycleStats& s, bool single_unit) {
  enum Unit { Epre, Core, Cau, Dram };
  const std::vector<std::pair<Unit, uint64_t>> jobs = {
      {Epre, s.epre_cycles}, {Core, s.sdue_cycles}, {Core, s.cfse_cycles}, {Cau, s.cau_cycles}, {Dram, s.dram_cycles}};
  std::map<int, uint64_t> free_at;
  uint64_t end = 0;
  for (const auto& [unit, cycles] : jobs) {
    const int key = single_unit ? 0 : unit;
    const uint64_t start = free_at[key];
    free_at[key] = start + cycles;
    end = std::max(end, free_at[key]);
  }
  return end;
}

ArchConfig small_array(int lanes, int cols) {
  ArchConfig cfg;
  cfg.lanes = lanes;
  cfg.dpu_cols = cols;
  return cfg;
}

}  // namespace

TEST_CASE("sim_tile costs D plus fill regardless of occupancy") {
  ArchConfig cfg;
  const cm::Block full{cm::ColumnRecord::make(0, 0xFFFF)};
  CHECK(sim_tile(cm::tile_from_block(full, 0, 16), 128, cfg).cycles == 132);
  cfg.pipeline_fill_cycles = 0;
  CHECK(sim_tile(cm::tile_from_block(full, 0, 16), 1, cfg).cycles == 1);
  CHECK(sim_dense_tile(16, 16, 1, cfg).cycles == 1);
}

TEST_CASE("a 40% occupied tile runs full length and gates the idle 60%") {
  const ArchConfig cfg = small_array(10, 10);
  cm::Block block;
  for (uint32_t j = 0; j < 10; ++j) block.push_back(cm::ColumnRecord::make(j, 0b1111));
  const auto tile = cm::tile_from_block(block, 0, 10);
  const std::size_t d = 64;
  const TileCost cost = sim_tile(tile, d, cfg);
  CHECK(cost.cycles == sim_dense_tile(10, 10, d, cfg).cycles);
  CHECK(cost.slots == 100);
  CHECK(cost.occupied_slots == 40);
  CHECK(cost.gated_pj == doctest::Approx(0.6 * 100 * d * cfg.energy.per_mac_pj * cfg.energy.gated_idle_fraction));
  CHECK(sim_dense_tile(10, 10, d, cfg).gated_pj == 0.0);
}

TEST_CASE("sim_tile rejects tiles wider than the array") {
  const ArchConfig cfg = small_array(16, 4);
  cm::Block block;
  for (uint32_t j = 0; j < 5; ++j) block.push_back(cm::ColumnRecord::make(j, 1));
  CHECK_THROWS_AS(sim_tile(cm::tile_from_block(block, 0, 16), 8, cfg), ContractError);
  CHECK_THROWS_AS(sim_dense_tile(17, 1, 8, cfg), ContractError);
}

TEST_CASE("dense matmul cycles") {
  ArchConfig cfg;
  CHECK(sim_mmul_dense(64, 64, 128, cfg).sdue_cycles == 2112);
  CHECK(sim_mmul_dense(64, 64, 128, cfg).tiles == 16);
  testing::Rng rng(8);
  for (int t = 0; t < 50; ++t) {
    cfg.lanes = static_cast<int>(testing::uniform(rng, 1, 64));
    cfg.dpu_cols = static_cast<int>(testing::uniform(rng, 1, 64));
    cfg.pipeline_fill_cycles = testing::uniform(rng, 0, 9);
    const std::size_t r = testing::uniform(rng, 1, 300), c = testing::uniform(rng, 1, 300), d = testing::uniform(rng, 1, 256);
    const auto s = sim_mmul_dense(r, c, d, cfg);
    REQUIRE(s.sdue_cycles == closed_form(r, c, d, cfg));
    REQUIRE(s.macs_executed == r * c * d);
    REQUIRE(s.macs_skipped == 0);
  }
}

TEST_CASE("sparse matmul cycles") {
  const ArchConfig cfg;
  const Bitmask zero(64, 64);
  const auto none = sim_mmul_sparse(cm::conmerge(zero, 16, 16), 64, 64, 128, cfg);
  CHECK(none.sdue_cycles == 0);
  CHECK(none.macs_skipped == 64 * 64 * 128);
  CHECK(none.dram_bytes == 0);

  testing::Rng rng(97);
  for (int t = 0; t < 5; ++t) {
    const Bitmask m = testing::random_mask(rng, 256, 512, 0.03);
    const auto plan = cm::conmerge(m, 16, 16);
    const auto sparse = sim_mmul_sparse(plan, 256, 512, 64, cfg);
    const auto dense = sim_mmul_dense(256, 512, 64, cfg);
    const double cycle_ratio = static_cast<double>(sparse.sdue_cycles) / static_cast<double>(dense.sdue_cycles);
    CHECK(std::abs(cycle_ratio / plan.stats.remaining_ratio_merge - 1.0) <= 0.2);
    CHECK(sparse.tiles == plan.stats.tiles);
    CHECK(sparse.macs_executed + sparse.macs_skipped == dense.macs_executed);
    CHECK(sparse.dram_bytes == weight_bytes(plan.stats.cols_after_condense * 64, 12));
  }
  CHECK_THROWS_AS(sim_mmul_sparse(cm::conmerge(zero, 16, 16), 64, 65, 8, cfg), ContractError);
}

TEST_CASE("sparser nested masks never cost more energy") {
  const ArchConfig cfg;
  testing::Rng rng(31);
  std::bernoulli_distribution drop(0.15);
  for (int t = 0; t < 40; ++t) {
    Bitmask m = testing::random_mask(rng, 64, 96, std::uniform_real_distribution<double>(0.02, 0.4)(rng));
    double prev_pj = energy(sim_mmul_sparse(cm::conmerge(m, 16, 16), 64, 96, 32, cfg), cfg).total_pj;
    for (int step = 0; step < 6; ++step) {
      for (std::size_t i = 0; i < 64; ++i) {
        for (std::size_t j = 0; j < 96; ++j) {
          if (m.get(i, j) && drop(rng)) m.set(i, j, false);
        }
      }
      const double pj = energy(sim_mmul_sparse(cm::conmerge(m, 16, 16), 64, 96, 32, cfg), cfg).total_pj;
      REQUIRE(pj <= prev_pj);
      prev_pj = pj;
    }
  }
}

// Greedy merging can pack a sparser nested mask into one more tile, so cycles
// are checked on the mean over masks at each sparsity.
TEST_CASE("mean SDUE cycles do not increase with sparsity") {
  const ArchConfig cfg;
  testing::Rng rng(32);
  double prev = std::numeric_limits<double>::infinity();
  for (double sparsity = 0.5; sparsity < 0.995; sparsity += 0.05) {
    double cycles = 0.0;
    for (int k = 0; k < 20; ++k) {
      const Bitmask m = testing::random_mask(rng, 64, 96, 1.0 - sparsity);
      cycles += static_cast<double>(sim_mmul_sparse(cm::conmerge(m, 16, 16), 64, 96, 32, cfg).sdue_cycles) / 20.0;
    }
    CHECK(cycles <= prev);
    prev = cycles;
  }
}

TEST_CASE("inner-sparse matmul streams only the needed inner indices") {
  ArchConfig cfg;
  Bitmask lhs(16, 40);
  for (std::size_t i = 0; i < 16; ++i) lhs.set(i, 3, true);
  lhs.set(5, 20, true);
  const auto s = sim_mmul_inner_sparse(lhs, 32, cfg);
  CHECK(s.sdue_cycles == 2 * (2 + cfg.pipeline_fill_cycles));
  CHECK(s.macs_executed == 17 * 32);
  CHECK(s.macs_executed + s.macs_skipped == 16 * 40 * 32);
  CHECK(s.dram_bytes == weight_bytes(2 * 32, 12));
  CHECK(sim_mmul_inner_sparse(Bitmask(16, 40), 32, cfg).sdue_cycles == 0);
  CHECK(sim_mmul_inner_sparse(Bitmask::ones(16, 40), 32, cfg).sdue_cycles == sim_mmul_dense(16, 32, 40, cfg).sdue_cycles);
}

TEST_CASE("cfse cycles and the two-way mode") {
  ArchConfig one, two;
  one.cfse_mode = CfseMode::OneWay32;
  two.cfse_mode = CfseMode::TwoWay16;
  for (auto fn : {cfse::Function::Softmax, cfse::Function::LayerNorm, cfse::Function::Gelu, cfse::Function::Geglu,
                  cfse::Function::Residual}) {
    for (std::size_t n : {0, 32, 64, 320, 4096}) {
      const uint64_t work = n * cfse_ops_per_element(fn);
      REQUIRE(work % 32 == 0);
      CHECK(cfse_cycles(fn, n, one) == 2 * cfse_cycles(fn, n, two));
      CHECK(cfse_cycles(fn, n, one) == work / 16);
    }
    CHECK(cfse_cycles(fn, 1, one) == 1);
  }

  const QTensor zeros({1, 4}, 16, 8, {0, 0, 0, 0});
  const auto sm = cfse_eval(cfse::Function::Softmax, zeros, two, 12);
  for (int32_t v : sm.out.data()) CHECK(v == 1024);
  CHECK(sm.stats.cfse_cycles == cfse_cycles(cfse::Function::Softmax, 4, two));
  CHECK(cfse_eval(cfse::Function::Gelu, QTensor({1}, 12, 8, {0}), two, 8).out.at(0) == 0);
  const auto ln = cfse_eval(cfse::Function::LayerNorm, QTensor({1, 3}, 12, 8, {9, 9, 9}), two, 10);
  for (int32_t v : ln.out.data()) CHECK(v == 0);
  CHECK(cfse_eval(cfse::Function::Geglu, QTensor({2, 4}, 12, 8, std::vector<int32_t>(8, 0)), two, 8).out.cols() == 2);
  const QTensor r1({2}, 16, 8, {1, 2});
  CHECK(cfse_eval(cfse::Function::Residual, r1, two, 8, &r1).out.at(1) == 4);
  CHECK_THROWS_AS(cfse_eval(cfse::Function::Residual, r1, two, 8), ContractError);
}

TEST_CASE("prediction array cycles") {
  const ArchConfig cfg;
  CHECK(sim_epre(64, 64, 128, cfg) == sim_mmul_dense(64, 64, 128, cfg).sdue_cycles);
  CHECK(sim_epre(16, 16, 40, cfg) == sim_dense_tile(16, 16, 40, cfg).cycles);
  CHECK(sim_epre(0, 64, 128, cfg) == 0);
  CHECK(sim_epre(64, 0, 128, cfg) == 0);
}

TEST_CASE("CAU cycles") {
  ArchConfig cfg;
  CHECK(sim_cau(0, 37, 0, cfg) == 37 * cfg.cau_alpha);
  CHECK(sim_cau(0, 0, 0, cfg) == 0);
  CHECK(sim_cau(5, 10, 3, cfg) == 10 * cfg.cau_alpha + 5 * cfg.cau_beta + 3 * cfg.cau_gamma);
  CHECK(sim_cau(cm::conmerge(Bitmask(32, 32), 16, 16).stats, cfg) == 0);
}

TEST_CASE("sorted block formation lowers CAU cycles on column-skewed masks") {
  const ArchConfig cfg;
  testing::Rng rng(90);
  uint64_t sorted = 0, unsorted = 0;
  for (int t = 0; t < 20; ++t) {
    const Bitmask m = testing::column_skewed_mask(rng, 64, 512, 0.1, 0.1);
    cm::ConMergeConfig c;
    sorted += sim_cau(cm::conmerge(m, 16, 16, c).stats, cfg);
    c.sorted = false;
    unsorted += sim_cau(cm::conmerge(m, 16, 16, c).stats, cfg);
  }
  CHECK(static_cast<double>(sorted) <= 0.75 * static_cast<double>(unsorted));
}

TEST_CASE("DRAM cycles") {
  ArchConfig cfg;
  cfg.dram_bytes_per_cycle = 64;
  cfg.dram_latency_cycles = 0;
  CHECK(sim_dram(1024, cfg) == 16);
  cfg.dram_latency_cycles = 100;
  CHECK(sim_dram(0, cfg) == 100);
  CHECK(sim_dram(1, cfg) == 101);
  CHECK(weight_bytes(3, 12) == 5);
}

TEST_CASE("stage totals match an event-ordered schedule") {
  const ArchConfig cfg;
  testing::Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    CycleStats s;
    s.epre_cycles = testing::uniform(rng, 0, 5000);
    s.sdue_cycles = testing::uniform(rng, 0, 5000);
    s.cfse_cycles = testing::uniform(rng, 0, 2000);
    s.cau_cycles = testing::uniform(rng, 0, 3000);
    s.dram_bytes = testing::uniform(rng, 0, 300000);
    CycleStats serial = s;
    close_stage(s, StageKind::Pipelined, cfg);
    close_stage(serial, StageKind::Serial, cfg);
    REQUIRE(s.dram_cycles == sim_dram(s.dram_bytes, cfg));
    REQUIRE(s.total_cycles == event_schedule(s, false));
    REQUIRE(serial.total_cycles == event_schedule(serial, true));
    REQUIRE(s.total_cycles <= s.parts_sum());
    REQUIRE(s.total_cycles >= s.sdue_cycles + s.cfse_cycles);
  }
}

TEST_CASE("energy") {
  const ArchConfig cfg;
  const EnergyStats z = energy(CycleStats{}, cfg);
  CHECK(z.total_pj == 0.0);

  const auto dense = sim_mmul_dense(64, 64, 32, cfg);
  CHECK(energy(dense, cfg).gated_pj == 0.0);

  testing::Rng rng(5);
  for (int t = 0; t < 30; ++t) {
    CycleStats s;
    s.macs_executed = testing::uniform(rng, 0, 1u << 20);
    s.macs_skipped = testing::uniform(rng, 0, 1u << 20);
    s.log_macs = testing::uniform(rng, 0, 1u << 18);
    s.cfse_ops = testing::uniform(rng, 0, 1u << 16);
    s.cau_cycles = testing::uniform(rng, 0, 1u << 12);
    s.sram_accesses = testing::uniform(rng, 0, 1u << 20);
    s.dram_bytes = testing::uniform(rng, 0, 1u << 20);
    const EnergyStats e = energy(s, cfg);
    const auto& k = cfg.energy;
    CHECK(e.compute_pj == doctest::Approx(static_cast<double>(s.macs_executed) * k.per_mac_pj));
    CHECK(e.gated_pj == doctest::Approx(static_cast<double>(s.macs_skipped) * k.per_mac_pj * k.gated_idle_fraction));
    CHECK(e.dram_pj == doctest::Approx(static_cast<double>(s.dram_bytes) * k.per_dram_byte_pj));
    CHECK(e.total_pj == e.compute_pj + e.gated_pj + e.sram_pj + e.dram_pj + e.aux_pj);
  }

  const Bitmask m = testing::random_mask(rng, 64, 64, 0.2);
  const auto sparse = sim_mmul_sparse(cm::conmerge(m, 16, 16), 64, 64, 32, cfg);
  REQUIRE(sparse.macs_skipped > 0);
  CHECK(energy(sparse, cfg).total_pj < energy(dense, cfg).total_pj);
}

TEST_CASE("arch config text") {
  const ArchConfig def;
  const ArchConfig round = parse_arch_config(to_config_text(def));
  CHECK(to_config_text(round) == to_config_text(def));

  const ArchConfig c = parse_arch_config("# comment\nlanes = 8\n\ncfse_mode = one-way-32  # trailing\nper_mac_pj=0.5\n");
  CHECK(c.lanes == 8);
  CHECK(c.cfse_mode == CfseMode::OneWay32);
  CHECK(c.energy.per_mac_pj == 0.5);

  const auto fails_with = [](const std::string& text, const std::string& needle) {
    try {
      parse_arch_config(text, "cfg");
    } catch (const ConfigError& e) {
      return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
  };
  CHECK(fails_with("lanes = 16\nbogus = 1\n", "cfg:2"));
  CHECK(fails_with("lanes = 16\nbogus = 1\n", "bogus"));
  CHECK(fails_with("lanes = sixteen\n", "lanes"));
  CHECK(fails_with("lanes\n", "key = value"));
  CHECK(fails_with("wmem_buffers = 2\n", "wmem_buffers"));
  CHECK(fails_with("lanes = 65\n", "lanes"));
  CHECK(fails_with("gated_idle_fraction = 1.5\n", "gated_idle_fraction"));
  CHECK(fails_with("cfse_mode = three-way\n", "cfse_mode"));
  CHECK_THROWS_AS(load_arch_config("/nonexistent/arch.cfg"), IoError);
}

TEST_CASE("shipped default arch config equals the built-in defaults") {
  const ArchConfig shipped = load_arch_config(EXION_SOURCE_DIR "/configs/arch_default.cfg");
  CHECK(to_config_text(shipped) == to_config_text(ArchConfig{}));
}
