// exion: command-line driver for the simulator.
//
// Exit codes: 0 ok, 2 configuration or usage error, 3 I/O or parse error,
// 4 range error, 5 consistency or oracle failure.

#include <cmath>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "exion/archsim.hpp"
#include "exion/bench/experiment.hpp"
#include "exion/bench/oracle.hpp"
#include "exion/bench/report.hpp"
#include "exion/bench/trace.hpp"
#include "exion/bench/workload.hpp"
#include "exion/error.hpp"
#include "json.hpp"

namespace {

using namespace exion;
using namespace exion::bench;

enum Exit { kOk = 0, kConfig = 2, kIo = 3, kRange = 4, kConsistency = 5 };

struct Common {
  std::string config = "all";
  std::string arch_path;
  std::string params_path;
  std::string out = "-";
  std::string format = "json";
  std::string two_step = "on";
  std::string baseline = "running";
  std::string nonlin = "gelu";
  std::string theta = "inf";
  std::string trace;
  bool ablation = false;
  bool no_compare = false;
  WorkloadSpec spec;
  RunParams params;
};

void add_workload_options(CLI::App* app, Common& c) {
  app->add_option("--seed", c.spec.seed, "Workload seed");
  app->add_option("--blocks", c.spec.blocks, "Transformer blocks");
  app->add_option("--d-model", c.spec.d_model, "Model width");
  app->add_option("--d-hidden", c.spec.d_hidden, "FFN hidden width");
  app->add_option("--heads", c.spec.heads, "Attention heads");
  app->add_option("--tokens", c.spec.tokens, "Tokens");
  app->add_option("--iterations", c.spec.iterations, "Denoising iterations");
  app->add_option("--step-size", c.spec.step_size, "Denoising step size");
  app->add_option("--nonlin", c.nonlin, "FFN nonlinearity")->check(CLI::IsMember({"gelu", "geglu"}));
  app->add_option("--qk-gain", c.spec.qk_gain, "Query/key weight gain");
  app->add_option("--ffn-bias-mean", c.spec.ffn_bias_mean, "Mean of the first FFN layer bias");
  app->add_option("--ffn-bias-std", c.spec.ffn_bias_std, "Spread of the first FFN layer bias");
}

void add_run_options(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "base, ep, ffnr or all")->check(CLI::IsMember({"base", "ep", "ffnr", "all"},
                                                                                      CLI::ignore_case));
  app->add_option("--arch", c.arch_path, "Architecture config file");
  app->add_option("--params", c.params_path, "Run parameter file (tau, n_sparse, topk, ...)");
  app->add_option("--tau", c.params.tau, "Reuse threshold on |h| (real units; negative keeps everything)");
  app->add_option("--n-sparse", c.params.n_sparse, "Sparse iterations per dense iteration");
  app->add_option("--topk", c.params.topk, "Attention scores kept per row");
  app->add_option("--theta-dom", c.theta, "One-hot dominance margin (real units, or inf)");
  app->add_option("--two-step", c.two_step, "Two-step leading-one detection")->check(CLI::IsMember({"on", "off"}));
  app->add_option("--baseline", c.baseline, "Reuse baseline")->check(CLI::IsMember({"running", "frozen"}));
  app->add_option("--mse-bound", c.params.mse_bound, "Relative MSE bound reported against");
  app->add_option("--out", c.out, "Output path ('-' for stdout)");
  app->add_option("--format", c.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  add_workload_options(app, c);
}

arch::ArchConfig load_arch(const Common& c) {
  return c.arch_path.empty() ? arch::ArchConfig{} : arch::load_arch_config(c.arch_path);
}

// Resolves file defaults, then explicit flags on top. Only the config the user
// asked for is strict about n_sparse; references and ablation rows without
// reuse run with n_sparse = 0.
RunParams resolve_params(const CLI::App* app, const Common& c, Config cfg, bool strict = true) {
  RunParams p = c.params_path.empty() ? RunParams{} : load_run_params(c.params_path);
  const auto given = [&](const char* flag) { return app->count(flag) > 0; };
  if (given("--tau")) p.tau = c.params.tau;
  if (given("--n-sparse")) p.n_sparse = c.params.n_sparse;
  if (given("--topk")) p.topk = c.params.topk;
  if (given("--mse-bound")) p.mse_bound = c.params.mse_bound;
  if (given("--theta-dom")) {
    if (c.theta == "inf") {
      p.theta_dom = std::numeric_limits<double>::infinity();
    } else {
      try {
        std::size_t used = 0;
        p.theta_dom = std::stod(c.theta, &used);
        if (used != c.theta.size()) throw std::invalid_argument(c.theta);
      } catch (const std::exception&) {
        throw ConfigError("--theta-dom: expected a number or inf, got '" + c.theta + "'");
      }
    }
  }
  if (given("--two-step")) p.two_step = c.two_step == "on";
  if (given("--baseline")) p.baseline = c.baseline == "running" ? ffn::Baseline::Running : ffn::Baseline::Frozen;
  // The default schedule only applies where reuse is enabled.
  if (!uses_ffnr(cfg) && (!strict || !given("--n-sparse"))) p.n_sparse = 0;
  return p;
}

WorkloadSpec resolve_spec(const Common& c) {
  WorkloadSpec s = c.spec;
  s.nonlin = c.nonlin == "geglu" ? ffn::Nonlin::Geglu : ffn::Nonlin::Gelu;
  return s;
}

int cmd_run(const CLI::App* app, const Common& c) {
  const Config cfg = parse_config(c.config);
  const auto arch = load_arch(c);
  const Format fmt = parse_format(c.format);
  std::vector<RunReport> reports;

  if (!c.trace.empty()) {
    if (c.ablation) throw ConfigError("--ablation cannot be combined with --trace");
    const auto tensors = load_trace(c.trace);
    reports.push_back(replay_trace(tensors, cfg, arch, resolve_params(app, c, cfg)));
    write_output(c.out, emit(reports, fmt));
    return kOk;
  }

  const Workload w = gen_workload(resolve_spec(c));
  const std::vector<Config> configs =
      c.ablation ? std::vector<Config>{Config::Base, Config::EP, Config::FFNR, Config::All} : std::vector<Config>{cfg};
  std::optional<RunReport> base;
  if (!c.no_compare || c.ablation) {
    base = run_experiment(w, Config::Base, arch, resolve_params(app, c, Config::Base, cfg == Config::Base && !c.ablation));
  }
  for (const Config k : configs) {
    RunReport r = k == Config::Base && base ? *base : run_experiment(w, k, arch, resolve_params(app, c, k, !c.ablation));
    if (base) compare_to_base(r, *base);
    reports.push_back(std::move(r));
  }
  write_output(c.out, emit(reports, fmt));
  return kOk;
}

template <typename T>
std::vector<T> parse_list(const std::string& s, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      if constexpr (std::is_same_v<T, int>) {
        out.push_back(std::stoi(item, &used));
      } else {
        out.push_back(item == "inf" ? std::numeric_limits<double>::infinity() : std::stod(item, &used));
        if (item == "inf") used = item.size();
      }
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(std::string(flag) + ": bad list element '" + item + "'");
    }
  }
  return out;
}

int cmd_sweep(const CLI::App* app, const Common& c, const std::string& taus, const std::string& ns,
              const std::string& ks, const std::string& thetas) {
  const Config cfg = parse_config(c.config);
  const auto arch = load_arch(c);
  const Format fmt = parse_format(c.format);
  SweepGrid grid{parse_list<double>(taus, "--tau-grid"), parse_list<int>(ns, "--n-sparse-grid"),
                 parse_list<int>(ks, "--topk-grid"), parse_list<double>(thetas, "--theta-grid")};
  const Workload w = gen_workload(resolve_spec(c));
  const auto points = sweep(w, cfg, arch, resolve_params(app, c, cfg), grid);
  if (fmt == Format::Csv) {
    write_output(c.out, emit_sweep_csv(points));
  } else {
    std::vector<RunReport> reports;
    for (const auto& p : points) reports.push_back(p.report);
    write_output(c.out, emit_json(reports));
  }
  return kOk;
}

int cmd_oracle(uint64_t seed, std::size_t instances, const std::string& out) {
  const auto s = run_oracles(seed, instances);
  write_output(out, oracle_json(s));
  return s.ok() ? kOk : kConsistency;
}

int cmd_trace_inspect(const std::string& path, const std::string& out) {
  const auto tensors = load_trace(path);
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  doc["version"] = kTraceVersion;
  doc["tensors"] = nlohmann::ordered_json::array();
  for (const auto& t : tensors) {
    int64_t lo = 0, hi = 0;
    if (!t.data.empty()) {
      lo = *std::min_element(t.data.begin(), t.data.end());
      hi = *std::max_element(t.data.begin(), t.data.end());
    }
    doc["tensors"].push_back({{"dtype", dtype_name(t.dtype)}, {"dims", t.dims}, {"min", lo}, {"max", hi}});
  }
  write_output(out, doc.dump(2) + "\n");
  return kOk;
}

// Block-0 FFN weights plus the FFN inputs seen by a Base run.
int cmd_trace_export(const Common& c, const std::string& path, std::size_t block) {
  const Workload w = gen_workload(resolve_spec(c));
  if (block >= w.blocks.size()) throw ConfigError("--block out of range");
  const auto& layers = w.blocks[block].ffn;
  if (layers.nonlin != ffn::Nonlin::Gelu) throw ConfigError("trace export supports GELU workloads only");
  std::vector<TraceTensor> tensors{to_trace(layers.w1), to_trace(layers.w2)};
  RunParams p;
  p.n_sparse = 0;
  run_experiment(w, Config::Base, arch::ArchConfig{}, p, [&](int, std::size_t b, const QTensor& x) {
    if (b == block) tensors.push_back(to_trace(x));
  });
  save_trace(path, tensors);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"exion: diffusion accelerator simulator"};
  app.require_subcommand(1);

  Common run_opts;
  auto* run = app.add_subcommand("run", "Run the toy diffusion workload (or replay a trace) and report");
  add_run_options(run, run_opts);
  run->add_option("--trace", run_opts.trace, "Replay an activation trace through the FFN path");
  run->add_flag("--ablation", run_opts.ablation, "Report Base, EP, FFNR and All");
  run->add_flag("--no-compare", run_opts.no_compare, "Skip the Base reference run");

  Common sweep_opts;
  std::string tau_grid, n_grid, k_grid, theta_grid;
  auto* sw = app.add_subcommand("sweep", "Run a parameter grid");
  add_run_options(sw, sweep_opts);
  sw->add_option("--tau-grid", tau_grid, "Comma-separated tau values");
  sw->add_option("--n-sparse-grid", n_grid, "Comma-separated n_sparse values");
  sw->add_option("--topk-grid", k_grid, "Comma-separated topk values");
  sw->add_option("--theta-grid", theta_grid, "Comma-separated theta_dom values");

  uint64_t oracle_seed = 1;
  std::size_t oracle_instances = 1000;
  std::string oracle_out = "-";
  auto* orc = app.add_subcommand("oracle", "Randomized exactness checks");
  orc->add_option("--seed", oracle_seed, "Seed");
  orc->add_option("--instances", oracle_instances, "Instances per check");
  orc->add_option("--out", oracle_out, "Output path");

  auto* tr = app.add_subcommand("trace", "Inspect or export activation traces");
  tr->require_subcommand(1);
  std::string inspect_path, inspect_out = "-";
  auto* inspect = tr->add_subcommand("inspect", "Summarize a trace file");
  inspect->add_option("file", inspect_path, "Trace file")->required();
  inspect->add_option("--out", inspect_out, "Output path");
  Common export_opts;
  std::string export_path;
  std::size_t export_block = 0;
  auto* exp = tr->add_subcommand("export", "Write block FFN weights and Base-run FFN inputs as a trace");
  add_workload_options(exp, export_opts);
  exp->add_option("--out", export_path, "Trace file")->required();
  exp->add_option("--block", export_block, "Block index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (run->parsed()) return cmd_run(run, run_opts);
    if (sw->parsed()) return cmd_sweep(sw, sweep_opts, tau_grid, n_grid, k_grid, theta_grid);
    if (orc->parsed()) return cmd_oracle(oracle_seed, oracle_instances, oracle_out);
    if (inspect->parsed()) return cmd_trace_inspect(inspect_path, inspect_out);
    if (exp->parsed()) return cmd_trace_export(export_opts, export_path, export_block);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kIo;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const RangeError& e) {
    std::cerr << "range error: " << e.what() << "\n";
    return kRange;
  } catch (const std::logic_error& e) {
    std::cerr << "consistency error: " << e.what() << "\n";
    return kConsistency;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConsistency;
  }
  return kConfig;
}
