#include "exion/archsim.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "exion/error.hpp"

namespace exion::arch {

const char* cfse_mode_name(CfseMode m) { return m == CfseMode::OneWay32 ? "one-way-32" : "two-way-16"; }

void ArchConfig::validate() const {
  const auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("arch config: ") + what);
  };
  need(lanes >= 1 && lanes <= cm::kMaxLanes, "lanes must be in [1, 64]");
  need(dpu_cols >= 1, "dpu_cols must be positive");
  need(clock_hz > 0.0, "clock_hz must be positive");
  need(imem_buffers >= 1, "imem_buffers must be positive");
  need(wmem_buffers == cm::kMaxOrigins, "wmem_buffers must be 3 (one per weight line)");
  need(dram_bytes_per_cycle >= 1, "dram_bytes_per_cycle must be positive");
  need(cfse_lanes >= 1, "cfse_lanes must be positive");
  need(energy.per_mac_pj >= 0.0 && energy.per_log_mac_pj >= 0.0 && energy.per_cfse_op_pj >= 0.0 &&
           energy.per_sram_access_pj >= 0.0 && energy.per_dram_byte_pj >= 0.0 && energy.per_cau_cycle_pj >= 0.0,
       "energy constants must be non-negative");
  need(energy.gated_idle_fraction >= 0.0 && energy.gated_idle_fraction <= 1.0,
       "gated_idle_fraction must be in [0, 1]");
}

namespace {

using Setter = std::function<void(ArchConfig&, std::string_view)>;

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(std::string_view v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError("bad value '" + std::string(v) + "'");
  return out;
}

template <typename T, typename M>
Setter number(M ArchConfig::*field) {
  return [field](ArchConfig& c, std::string_view v) { c.*field = parse_number<T>(v); };
}

Setter energy_field(double EnergyConstants::*field) {
  return [field](ArchConfig& c, std::string_view v) { c.energy.*field = parse_number<double>(v); };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"lanes", number<int>(&ArchConfig::lanes)},
      {"dpu_cols", number<int>(&ArchConfig::dpu_cols)},
      {"clock_hz", number<double>(&ArchConfig::clock_hz)},
      {"imem_buffers", number<int>(&ArchConfig::imem_buffers)},
      {"wmem_buffers", number<int>(&ArchConfig::wmem_buffers)},
      {"dram_bytes_per_cycle", number<uint64_t>(&ArchConfig::dram_bytes_per_cycle)},
      {"dram_latency_cycles", number<uint64_t>(&ArchConfig::dram_latency_cycles)},
      {"pipeline_fill_cycles", number<uint64_t>(&ArchConfig::pipeline_fill_cycles)},
      {"cfse_lanes", number<int>(&ArchConfig::cfse_lanes)},
      {"cau_alpha", number<uint64_t>(&ArchConfig::cau_alpha)},
      {"cau_beta", number<uint64_t>(&ArchConfig::cau_beta)},
      {"cau_gamma", number<uint64_t>(&ArchConfig::cau_gamma)},
      {"cfse_mode",
       [](ArchConfig& c, std::string_view v) {
         if (v == "one-way-32") {
           c.cfse_mode = CfseMode::OneWay32;
         } else if (v == "two-way-16") {
           c.cfse_mode = CfseMode::TwoWay16;
         } else {
           throw ConfigError("cfse_mode must be one-way-32 or two-way-16, got '" + std::string(v) + "'");
         }
       }},
      {"per_mac_pj", energy_field(&EnergyConstants::per_mac_pj)},
      {"per_log_mac_pj", energy_field(&EnergyConstants::per_log_mac_pj)},
      {"per_cfse_op_pj", energy_field(&EnergyConstants::per_cfse_op_pj)},
      {"per_sram_access_pj", energy_field(&EnergyConstants::per_sram_access_pj)},
      {"per_dram_byte_pj", energy_field(&EnergyConstants::per_dram_byte_pj)},
      {"per_cau_cycle_pj", energy_field(&EnergyConstants::per_cau_cycle_pj)},
      {"gated_idle_fraction", energy_field(&EnergyConstants::gated_idle_fraction)},
  };
  return table;
}

}  // namespace

ArchConfig parse_arch_config(std::string_view text, const std::string& source) {
  ArchConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
    try {
      it->second(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + std::string(key) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ArchConfig load_arch_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open arch config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_arch_config(ss.str(), path);
}

std::string to_config_text(const ArchConfig& c) {
  std::ostringstream o;
  o.precision(17);
  o << "lanes = " << c.lanes << "\n"
    << "dpu_cols = " << c.dpu_cols << "\n"
    << "clock_hz = " << c.clock_hz << "\n"
    << "imem_buffers = " << c.imem_buffers << "\n"
    << "wmem_buffers = " << c.wmem_buffers << "\n"
    << "dram_bytes_per_cycle = " << c.dram_bytes_per_cycle << "\n"
    << "dram_latency_cycles = " << c.dram_latency_cycles << "\n"
    << "pipeline_fill_cycles = " << c.pipeline_fill_cycles << "\n"
    << "cfse_mode = " << cfse_mode_name(c.cfse_mode) << "\n"
    << "cfse_lanes = " << c.cfse_lanes << "\n"
    << "cau_alpha = " << c.cau_alpha << "\n"
    << "cau_beta = " << c.cau_beta << "\n"
    << "cau_gamma = " << c.cau_gamma << "\n"
    << "per_mac_pj = " << c.energy.per_mac_pj << "\n"
    << "per_log_mac_pj = " << c.energy.per_log_mac_pj << "\n"
    << "per_cfse_op_pj = " << c.energy.per_cfse_op_pj << "\n"
    << "per_sram_access_pj = " << c.energy.per_sram_access_pj << "\n"
    << "per_dram_byte_pj = " << c.energy.per_dram_byte_pj << "\n"
    << "per_cau_cycle_pj = " << c.energy.per_cau_cycle_pj << "\n"
    << "gated_idle_fraction = " << c.energy.gated_idle_fraction << "\n";
  return o.str();
}

CycleStats& CycleStats::operator+=(const CycleStats& o) {
  sdue_cycles += o.sdue_cycles;
  cfse_cycles += o.cfse_cycles;
  epre_cycles += o.epre_cycles;
  cau_cycles += o.cau_cycles;
  dram_cycles += o.dram_cycles;
  total_cycles += o.total_cycles;
  macs_executed += o.macs_executed;
  macs_skipped += o.macs_skipped;
  log_macs += o.log_macs;
  cfse_ops += o.cfse_ops;
  sram_accesses += o.sram_accesses;
  dram_bytes += o.dram_bytes;
  tiles += o.tiles;
  return *this;
}

EnergyStats& EnergyStats::operator+=(const EnergyStats& o) {
  compute_pj += o.compute_pj;
  gated_pj += o.gated_pj;
  sram_pj += o.sram_pj;
  dram_pj += o.dram_pj;
  aux_pj += o.aux_pj;
  total_pj += o.total_pj;
  return *this;
}

namespace {

uint64_t ceil_div(uint64_t a, uint64_t b) { return (a + b - 1) / b; }

uint64_t tile_cycles(std::size_t d, const ArchConfig& cfg) { return d + cfg.pipeline_fill_cycles; }

TileCost make_cost(uint64_t occupied, std::size_t d, const ArchConfig& cfg) {
  TileCost t;
  t.cycles = tile_cycles(d, cfg);
  t.slots = static_cast<uint64_t>(cfg.lanes) * static_cast<uint64_t>(cfg.dpu_cols);
  t.occupied_slots = occupied;
  t.gated_pj = static_cast<double>((t.slots - occupied) * d) * cfg.energy.per_mac_pj * cfg.energy.gated_idle_fraction;
  return t;
}

}  // namespace

TileCost sim_tile(const cm::MergedTile& tile, std::size_t d, const ArchConfig& cfg) {
  if (tile.width() > static_cast<std::size_t>(cfg.dpu_cols)) {
    throw ContractError("sim_tile: tile width " + std::to_string(tile.width()) + " exceeds dpu_cols " +
                        std::to_string(cfg.dpu_cols));
  }
  if (tile.lanes > cfg.lanes) throw ContractError("sim_tile: tile uses more lanes than the array has");
  TileCost t = make_cost(tile.placements.size(), d, cfg);
  // Per MAC cycle: one input per lane, one weight per origin, one conflict
  // input per CV lane; each output written once.
  uint64_t weight_lines = 0;
  for (std::size_t j = 0; j < tile.width(); ++j) weight_lines += tile.origin_count(j);
  t.sram_accesses = (static_cast<uint64_t>(tile.lanes) + weight_lines + tile.cv_lanes_used()) * d +
                    tile.placements.size();
  return t;
}

TileCost sim_dense_tile(std::size_t rows, std::size_t cols, std::size_t d, const ArchConfig& cfg) {
  if (rows > static_cast<std::size_t>(cfg.lanes) || cols > static_cast<std::size_t>(cfg.dpu_cols)) {
    throw ContractError("sim_dense_tile: tile exceeds the array");
  }
  TileCost t = make_cost(rows * cols, d, cfg);
  t.sram_accesses = (rows + cols) * d + rows * cols;
  return t;
}

uint64_t weight_bytes(uint64_t elements, int bits) { return ceil_div(elements * static_cast<uint64_t>(bits), 8); }

CycleStats sim_mmul_dense(std::size_t r, std::size_t c, std::size_t d, const ArchConfig& cfg, int weight_bits) {
  CycleStats s;
  const std::size_t l = static_cast<std::size_t>(cfg.lanes), p = static_cast<std::size_t>(cfg.dpu_cols);
  for (std::size_t r0 = 0; r0 < r; r0 += l) {
    for (std::size_t c0 = 0; c0 < c; c0 += p) {
      const TileCost t = sim_dense_tile(std::min(l, r - r0), std::min(p, c - c0), d, cfg);
      s.sdue_cycles += t.cycles;
      s.sram_accesses += t.sram_accesses;
      ++s.tiles;
    }
  }
  s.macs_executed = static_cast<uint64_t>(r) * c * d;
  s.dram_bytes = weight_bits > 0 ? weight_bytes(static_cast<uint64_t>(c) * d, weight_bits) : 0;
  return s;
}

CycleStats sim_mmul_sparse(const cm::ConMergeResult& plan, std::size_t r, std::size_t c, std::size_t d,
                           const ArchConfig& cfg, int weight_bits) {
  if (plan.stats.rows != r || plan.stats.cols_total != c) throw ContractError("sim_mmul_sparse: plan extent mismatch");
  CycleStats s;
  for (const auto& tile : plan.tiles) {
    const TileCost t = sim_tile(tile, d, cfg);
    s.sdue_cycles += t.cycles;
    s.sram_accesses += t.sram_accesses;
    ++s.tiles;
  }
  s.macs_executed = static_cast<uint64_t>(plan.stats.required_elements) * d;
  s.macs_skipped = static_cast<uint64_t>(r) * c * d - s.macs_executed;
  s.dram_bytes = weight_bits > 0 ? weight_bytes(static_cast<uint64_t>(plan.stats.cols_after_condense) * d, weight_bits) : 0;
  return s;
}

CycleStats sim_mmul_inner_sparse(const Bitmask& lhs_nonzero, std::size_t c, const ArchConfig& cfg, int weight_bits) {
  CycleStats s;
  const std::size_t r = lhs_nonzero.rows(), d = lhs_nonzero.cols();
  const std::size_t l = static_cast<std::size_t>(cfg.lanes);
  const uint64_t col_tiles = ceil_div(c, static_cast<uint64_t>(cfg.dpu_cols));
  std::vector<uint8_t> global(d, 0);
  std::vector<uint8_t> used(d);
  uint64_t nnz = 0;
  for (std::size_t r0 = 0; r0 < r; r0 += l) {
    std::fill(used.begin(), used.end(), 0);
    const std::size_t rows = std::min(l, r - r0);
    for (std::size_t i = r0; i < r0 + rows; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        if (lhs_nonzero.get(i, k)) {
          used[k] = 1;
          ++nnz;
        }
      }
    }
    const auto depth = static_cast<uint64_t>(std::count(used.begin(), used.end(), 1));
    for (std::size_t k = 0; k < d; ++k) global[k] |= used[k];
    if (depth == 0) continue;
    s.sdue_cycles += col_tiles * (depth + cfg.pipeline_fill_cycles);
    s.tiles += col_tiles;
    s.sram_accesses += col_tiles * (rows + std::min<uint64_t>(c, cfg.dpu_cols)) * depth + rows * c;
  }
  s.macs_executed = nnz * c;
  s.macs_skipped = static_cast<uint64_t>(r) * d * c - s.macs_executed;
  const auto rows_needed = static_cast<uint64_t>(std::count(global.begin(), global.end(), 1));
  s.dram_bytes = weight_bits > 0 ? weight_bytes(rows_needed * c, weight_bits) : 0;
  return s;
}

std::size_t cfse_ops_per_element(cfse::Function fn) {
  switch (fn) {
    case cfse::Function::Softmax: return 4;    // max, exp, sum, divide
    case cfse::Function::LayerNorm: return 4;  // sum, square-sum, subtract, scale
    case cfse::Function::Gelu: return 2;       // table lookup, interpolate
    case cfse::Function::Geglu: return 3;
    case cfse::Function::Residual: return 1;
  }
  return 1;
}

uint64_t cfse_cycles(cfse::Function fn, std::size_t elements, const ArchConfig& cfg) {
  const uint64_t ways = cfg.cfse_mode == CfseMode::TwoWay16 ? 2 : 1;
  return ceil_div(static_cast<uint64_t>(elements) * cfse_ops_per_element(fn),
                  static_cast<uint64_t>(cfg.cfse_lanes) * ways);
}

CfseResult cfse_eval(cfse::Function fn, const QTensor& x, const ArchConfig& cfg, int out_scale, const QTensor* other) {
  CfseResult r;
  switch (fn) {
    case cfse::Function::Softmax: r.out = cfse::softmax_rows(x, Bitmask{}, 1.0, out_scale, cfse::Mode::Table); break;
    case cfse::Function::LayerNorm: r.out = cfse::layernorm_rows(x, out_scale, cfse::Mode::Table); break;
    case cfse::Function::Gelu: r.out = cfse::gelu(x, out_scale, cfse::Mode::Table); break;
    case cfse::Function::Geglu: r.out = cfse::geglu(x, out_scale, cfse::Mode::Table); break;
    case cfse::Function::Residual:
      if (other == nullptr) throw ContractError("cfse_eval: residual needs a second operand");
      if (x.scale() != out_scale) throw ContractError("cfse_eval: residual operands must be at out_scale");
      r.out = cfse::residual(x, *other, 16);
      break;
  }
  const std::size_t elements = fn == cfse::Function::Geglu ? r.out.size() : x.size();
  r.stats.cfse_cycles = cfse_cycles(fn, elements, cfg);
  r.stats.cfse_ops = elements * cfse_ops_per_element(fn);
  r.stats.total_cycles = r.stats.cfse_cycles;
  return r;
}

uint64_t sim_epre(std::size_t r, std::size_t c, std::size_t d, const ArchConfig& cfg) {
  if (r == 0 || c == 0) return 0;
  return ceil_div(r, static_cast<uint64_t>(cfg.lanes)) * ceil_div(c, static_cast<uint64_t>(cfg.dpu_cols)) *
         tile_cycles(d, cfg);
}

uint64_t sim_cau(std::size_t merge_attempts, std::size_t columns, std::size_t conflicts, const ArchConfig& cfg) {
  return cfg.cau_alpha * columns + cfg.cau_beta * merge_attempts + cfg.cau_gamma * conflicts;
}

uint64_t sim_cau(const cm::CompactionStats& st, const ArchConfig& cfg) {
  return sim_cau(st.merge_attempts, st.stripe_cols_after_condense, st.conflict_resolutions, cfg);
}

uint64_t sim_dram(uint64_t bytes, const ArchConfig& cfg) {
  return ceil_div(bytes, cfg.dram_bytes_per_cycle) + cfg.dram_latency_cycles;
}

void close_stage(CycleStats& s, StageKind kind, const ArchConfig& cfg) {
  s.dram_cycles = sim_dram(s.dram_bytes, cfg);
  if (kind == StageKind::Serial) {
    s.total_cycles = s.parts_sum();
  } else {
    s.total_cycles = std::max({s.epre_cycles, s.sdue_cycles + s.cfse_cycles, s.cau_cycles, s.dram_cycles});
  }
}

EnergyStats energy(const CycleStats& s, const ArchConfig& cfg) {
  const auto& e = cfg.energy;
  EnergyStats out;
  out.compute_pj = static_cast<double>(s.macs_executed) * e.per_mac_pj;
  out.gated_pj = static_cast<double>(s.macs_skipped) * e.per_mac_pj * e.gated_idle_fraction;
  out.sram_pj = static_cast<double>(s.sram_accesses) * e.per_sram_access_pj;
  out.dram_pj = static_cast<double>(s.dram_bytes) * e.per_dram_byte_pj;
  out.aux_pj = static_cast<double>(s.log_macs) * e.per_log_mac_pj + static_cast<double>(s.cfse_ops) * e.per_cfse_op_pj +
               static_cast<double>(s.cau_cycles) * e.per_cau_cycle_pj;
  out.total_pj = out.compute_pj + out.gated_pj + out.sram_pj + out.dram_pj + out.aux_pj;
  return out;
}

}  // namespace exion::arch
