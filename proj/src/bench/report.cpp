#include "exion/bench/report.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "exion/error.hpp"
#include "json.hpp"

namespace exion::bench {

using json = nlohmann::ordered_json;

Format parse_format(std::string_view s) {
  if (s == "json") return Format::Json;
  if (s == "csv") return Format::Csv;
  throw ConfigError("unknown format '" + std::string(s) + "' (expected json or csv)");
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

namespace {

std::string hex64(uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json optional_number(const std::optional<double>& v) { return v ? number_or_null(*v) : json(nullptr); }

json cycles_json(const arch::CycleStats& c) {
  return {{"sdue_cycles", c.sdue_cycles},   {"cfse_cycles", c.cfse_cycles},     {"epre_cycles", c.epre_cycles},
          {"cau_cycles", c.cau_cycles},     {"dram_cycles", c.dram_cycles},     {"total_cycles", c.total_cycles},
          {"macs_executed", c.macs_executed}, {"macs_skipped", c.macs_skipped}, {"log_macs", c.log_macs},
          {"cfse_ops", c.cfse_ops},         {"sram_accesses", c.sram_accesses}, {"dram_bytes", c.dram_bytes},
          {"tiles", c.tiles}};
}

json energy_json(const arch::EnergyStats& e) {
  return {{"compute_pj", e.compute_pj}, {"gated_pj", e.gated_pj}, {"sram_pj", e.sram_pj},
          {"dram_pj", e.dram_pj},       {"aux_pj", e.aux_pj},     {"total_pj", e.total_pj}};
}

json compaction_json(const cm::CompactionStats& s) {
  return {{"rows", s.rows},
          {"cols_total", s.cols_total},
          {"cols_after_condense", s.cols_after_condense},
          {"stripes", s.stripes},
          {"stripe_cols_total", s.stripe_cols_total},
          {"stripe_cols_after_condense", s.stripe_cols_after_condense},
          {"physical_cols_after_merge", s.physical_cols_after_merge},
          {"tiles", s.tiles},
          {"merge_attempts", s.merge_attempts},
          {"merge_successes", s.merge_successes},
          {"conflict_resolutions", s.conflict_resolutions},
          {"required_elements", s.required_elements},
          {"remaining_ratio_condense", s.remaining_ratio_condense},
          {"remaining_ratio_stripe_condense", s.remaining_ratio_stripe_condense},
          {"remaining_ratio_merge", s.remaining_ratio_merge}};
}

json report_json(const RunReport& r) {
  const auto& s = r.spec;
  const auto& p = r.params;
  json j;
  j["config"] = config_name(r.config);
  j["trace_replay"] = r.trace_replay;
  j["workload"] = {{"blocks", s.blocks},       {"d_model", s.d_model},     {"d_hidden", s.d_hidden},
                   {"heads", s.heads},         {"tokens", s.tokens},       {"iterations", s.iterations},
                   {"step_size", s.step_size}, {"seed", s.seed},           {"nonlin", ffn::nonlin_name(s.nonlin)},
                   {"qk_gain", s.qk_gain},     {"ffn_bias_mean", s.ffn_bias_mean}, {"ffn_bias_std", s.ffn_bias_std}};
  j["params"] = {{"tau", p.tau},
                 {"n_sparse", p.n_sparse},
                 {"topk", p.topk},
                 {"theta_dom", number_or_null(p.theta_dom)},
                 {"two_step", p.two_step},
                 {"baseline", p.baseline == ffn::Baseline::Running ? "running" : "frozen"},
                 {"mse_bound", p.mse_bound}};
  j["checksum"] = hex64(r.checksum);
  j["ffn_mask_sparsity"] = r.ffn_mask_sparsity;
  j["attn_mask_sparsity"] = r.attn_mask_sparsity;
  j["rel_mse_vs_base"] = optional_number(r.rel_mse_vs_base);
  j["within_mse_bound"] = r.rel_mse_vs_base ? json(*r.rel_mse_vs_base <= p.mse_bound) : json(nullptr);
  j["speedup_vs_base"] = optional_number(r.speedup_vs_base);
  j["energy_ratio_vs_base"] = optional_number(r.energy_ratio_vs_base);
  j["similarity"] = {{"adjacent_cosine_mean", r.adjacent_cosine_mean},
                     {"adjacent_cosine_min", r.adjacent_cosine_min}};
  j["cycles"] = cycles_json(r.cycles);
  j["energy"] = energy_json(r.energy);
  j["compaction"] = compaction_json(r.compaction);
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"name", l.name},
                      {"mask_sparsity", l.mask_sparsity},
                      {"cycles", cycles_json(l.cycles)},
                      {"energy", energy_json(l.energy)},
                      {"compaction", compaction_json(l.compaction)}});
  }
  j["layers"] = std::move(layers);
  return j;
}

}  // namespace

std::string emit_json(const std::vector<RunReport>& reports) {
  json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["generator"] = "exion";
  doc["reports"] = json::array();
  for (const auto& r : reports) doc["reports"].push_back(report_json(r));
  return doc.dump(2) + "\n";
}

std::string emit_csv(const std::vector<RunReport>& reports) {
  std::ostringstream o;
  o << "# schema_version=" << kReportSchemaVersion << "\n";
  o << "config,layer,mask_sparsity,sdue_cycles,cfse_cycles,epre_cycles,cau_cycles,dram_cycles,total_cycles,"
       "macs_executed,macs_skipped,dram_bytes,compute_pj,gated_pj,sram_pj,dram_pj,aux_pj,total_pj,"
       "remaining_ratio_condense,remaining_ratio_stripe_condense,remaining_ratio_merge,merge_attempts,"
       "checksum,rel_mse_vs_base\n";
  for (const auto& r : reports) {
    const std::string mse = r.rel_mse_vs_base ? format_double(*r.rel_mse_vs_base) : "";
    for (const auto& l : r.layers) {
      const auto& c = l.cycles;
      const auto& e = l.energy;
      const auto& s = l.compaction;
      o << config_name(r.config) << ',' << l.name << ',' << format_double(l.mask_sparsity) << ',' << c.sdue_cycles
        << ',' << c.cfse_cycles << ',' << c.epre_cycles << ',' << c.cau_cycles << ',' << c.dram_cycles << ','
        << c.total_cycles << ',' << c.macs_executed << ',' << c.macs_skipped << ',' << c.dram_bytes << ','
        << format_double(e.compute_pj) << ',' << format_double(e.gated_pj) << ',' << format_double(e.sram_pj)
        << ',' << format_double(e.dram_pj) << ',' << format_double(e.aux_pj) << ',' << format_double(e.total_pj)
        << ',' << format_double(s.remaining_ratio_condense) << ','
        << format_double(s.remaining_ratio_stripe_condense) << ',' << format_double(s.remaining_ratio_merge)
        << ',' << s.merge_attempts << ',' << hex64(r.checksum) << ',' << mse << "\n";
    }
  }
  return o.str();
}

std::string emit(const std::vector<RunReport>& reports, Format f) {
  return f == Format::Json ? emit_json(reports) : emit_csv(reports);
}

std::string emit_sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream o;
  o << "# schema_version=" << kReportSchemaVersion << "\n";
  o << "config,tau,n_sparse,topk,theta_dom,ffn_mask_sparsity,attn_mask_sparsity,rel_mse_vs_base,total_cycles,"
       "speedup_vs_base,total_pj\n";
  for (const auto& p : points) {
    const auto& r = p.report;
    o << config_name(r.config) << ',' << format_double(p.tau) << ',' << p.n_sparse << ',' << p.topk << ','
      << format_double(p.theta_dom) << ',' << format_double(r.ffn_mask_sparsity) << ','
      << format_double(r.attn_mask_sparsity) << ',' << (r.rel_mse_vs_base ? format_double(*r.rel_mse_vs_base) : "")
      << ',' << r.cycles.total_cycles << ',' << (r.speedup_vs_base ? format_double(*r.speedup_vs_base) : "") << ','
      << format_double(r.energy.total_pj) << "\n";
  }
  return o.str();
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace exion::bench
