#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "exion/archsim.hpp"
#include "exion/bench/experiment.hpp"
#include "exion/bench/workload.hpp"
#include "exion/conmerge.hpp"
#include "exion/epredict.hpp"
#include "exion/ffn_reuse.hpp"
#include "exion/qtensor.hpp"
#include "support.hpp"

using namespace exion;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

template <typename F>
void criterion(int id, const char* name, F&& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::size_t stripe_surviving(const Bitmask& m, std::size_t base, std::size_t lanes) {
  std::size_t n = 0;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    for (std::size_t i = base; i < std::min(m.rows(), base + lanes); ++i) {
      if (m.get(i, c)) {
        ++n;
        break;
      }
    }
  }
  return n;
}

ffn::FFNLayerPair random_layers(testing::Rng& rng, std::size_t d, std::size_t h, ffn::Nonlin nl) {
  ffn::FFNLayerPair l;
  const std::size_t h1 = nl == ffn::Nonlin::Geglu ? 2 * h : h;
  l.w1 = testing::random_tensor(rng, d, h1, 12, 10);
  const QTensor b = testing::random_tensor(rng, 1, h1, 12, 10);
  l.b1 = QTensor({h1}, 16, 10, std::vector<int32_t>(b.data().begin(), b.data().end()));
  l.w2 = testing::random_tensor(rng, h, d, 12, 10);
  l.b2 = QTensor::zeros({d}, 16, 10);
  l.nonlin = nl;
  return l;
}

QTensor perturb(testing::Rng& rng, const QTensor& x, int amount) {
  std::uniform_int_distribution<int> u(-amount, amount);
  std::vector<int32_t> v(x.data().begin(), x.data().end());
  for (auto& e : v) e = static_cast<int32_t>(saturate(e + u(rng), 12));
  return QTensor(x.shape(), 12, x.scale(), std::move(v));
}

Outcome exactness() {
  testing::Rng rng(1001);
  const std::array<std::size_t, 3> ps{1, 4, 16};
  std::size_t positions = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t r = testing::uniform(rng, 1, 64), c = testing::uniform(rng, 1, 64),
                      d = testing::uniform(rng, 1, 32);
    const double sparsity = std::uniform_real_distribution<double>(0.5, 0.99)(rng);
    const std::size_t p = ps[t % 3];
    const QTensor a = testing::random_tensor(rng, r, d, 12), w = testing::random_tensor(rng, d, c, 12);
    const Bitmask m = testing::random_mask(rng, r, c, 1.0 - sparsity);
    cm::ConMergeConfig cfg;
    cfg.sorted = t % 2 == 0;
    const auto got = cm::execute_merged(a, w, cm::conmerge(m, 16, p, cfg).tiles, m);
    const QTensor ref = mmul_dense(a, w);
    if (!(got.produced == m)) return {false, "instance " + std::to_string(t) + ": produced positions differ"};
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        if (!m.get(i, j)) continue;
        ++positions;
        if (got.values.at(i, j) != ref.at(i, j)) {
          return {false, "instance " + std::to_string(t) + " element (" + std::to_string(i) + "," +
                             std::to_string(j) + ")"};
        }
      }
    }
  }
  return {true, "1000 instances, " + std::to_string(positions) + " positions exact"};
}

Outcome ffn_reuse_exactness() {
  testing::Rng rng(2002);
  std::size_t sparse_checked = 0;
  for (auto nl : {ffn::Nonlin::Gelu, ffn::Nonlin::Geglu}) {
    for (auto b : {ffn::Baseline::Running, ffn::Baseline::Frozen}) {
      const auto layers = random_layers(rng, 16, 48, nl);
      QTensor x = testing::random_tensor(rng, 12, 16, 12, 8);
      ffn::ReuseCache cache;
      const auto kinds = ffn::schedule(25, 4);
      for (std::size_t it = 0; it < kinds.size(); ++it) {
        x = perturb(rng, x, 40);
        const auto dense = ffn::run_dense_iter(x, layers, -1, b);
        if (kinds[it] == ffn::IterKind::Dense) {
          cache = dense.cache;
          continue;
        }
        if (!(ffn::run_sparse_iter(x, layers, cache) == dense.y)) {
          return {false, "all-ones schedule diverges at iteration " + std::to_string(it)};
        }
        ++sparse_checked;
      }
    }
    const auto layers = random_layers(rng, 16, 48, nl);
    const QTensor x = testing::random_tensor(rng, 16, 16, 12, 8);
    auto dense = ffn::run_dense_iter(x, layers, 64);
    for (int it = 0; it < 20; ++it) {
      if (!(ffn::run_sparse_iter(x, layers, dense.cache) == dense.y)) {
        return {false, "identical inputs diverge at sparse iteration " + std::to_string(it)};
      }
      ++sparse_checked;
    }
  }
  return {true, std::to_string(sparse_checked) + " sparse iterations bit-exact"};
}

Outcome compaction_trend() {
  testing::Rng rng(3003);
  cm::CompactionStats total;
  double min_condense = 1.0;
  for (int t = 0; t < 8; ++t) {
    const Bitmask m = testing::random_mask(rng, 256, 512, 0.03);
    const auto st = cm::conmerge(m, 16, 16).stats;
    min_condense = std::min(min_condense, st.remaining_ratio_condense);
    total += st;
  }

  // Condense-only survival of a 16-row column at sparsity s is 1 - s^16.
  const double s = 0.9, expect = 1.0 - std::pow(s, 16);
  std::size_t cols = 0, alive = 0;
  for (int t = 0; t < 20; ++t) {
    const Bitmask m = testing::random_mask(rng, 16, 512, 1.0 - s);
    const auto cr = cm::condense(m);
    cols += cr.cols_total;
    alive += cr.cols_after;
  }
  const double got = static_cast<double>(alive) / static_cast<double>(cols);
  const double sigma = std::sqrt(expect * (1.0 - expect) / static_cast<double>(cols));
  const bool ok = min_condense >= 0.95 && total.remaining_ratio_merge <= 0.15 && std::abs(got - expect) <= 3 * sigma;
  return {ok, fmt("condense min %.4f, merge %.4f, 16-row survival %.4f vs %.4f", min_condense,
                  total.remaining_ratio_merge, got, expect)};
}

Outcome merge_twice_floor() {
  testing::Rng rng(4004);
  std::size_t stripes = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t rows = testing::uniform(rng, 1, 96), cols = testing::uniform(rng, 1, 128);
    const std::size_t lanes = t % 2 ? 16 : testing::uniform(rng, 1, 32);
    const std::size_t p = testing::uniform(rng, 1, 16);
    const double density = std::uniform_real_distribution<double>(0.01, 0.7)(rng);
    const Bitmask m = t % 3 ? testing::random_mask(rng, rows, cols, density)
                            : testing::column_skewed_mask(rng, rows, cols, density, 0.2);
    cm::ConMergeConfig cfg;
    cfg.sorted = t % 4 != 0;
    const auto res = cm::conmerge(m, static_cast<int>(lanes), p, cfg);
    std::vector<std::size_t> phys((rows + lanes - 1) / lanes, 0);
    for (const auto& tile : res.tiles) phys[tile.stripe_base / lanes] += tile.width();
    for (std::size_t k = 0; k < phys.size(); ++k) {
      const std::size_t surviving = stripe_surviving(m, k * lanes, lanes);
      ++stripes;
      if (phys[k] < (surviving + 2) / 3) {
        return {false, "instance " + std::to_string(t) + " stripe " + std::to_string(k)};
      }
    }
  }
  return {true, "500 instances, " + std::to_string(stripes) + " stripes"};
}

Outcome sorting_benefit() {
  testing::Rng rng(5005);
  int not_worse = 0;
  double reduction = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Bitmask m = testing::column_skewed_mask(rng, 64, 512, 0.1, 0.1);
    const auto s = cm::merge_effort(m, 16, 16, {}, true), u = cm::merge_effort(m, 16, 16, {}, false);
    not_worse += s <= u ? 1 : 0;
    reduction += 1.0 - static_cast<double>(s) / static_cast<double>(u);
  }
  reduction /= 100.0;
  return {not_worse >= 90 && reduction >= 0.25,
          fmt("%.0f/100 not worse, mean attempt reduction %.3f", not_worse, reduction)};
}

Outcome ts_lod() {
  for (int64_t x = -2048; x <= 2047; ++x) {
    if (x == 0) continue;
    const uint64_t mag = static_cast<uint64_t>(std::llabs(x));
    const uint64_t two = ep::ts_lod(x).approx_magnitude(), one = ep::lod_operand(x).approx_magnitude();
    if (two > mag || one > mag || mag - two > mag - one) return {false, "value " + std::to_string(x)};
  }
  testing::Rng rng(6006);
  double err_two = 0.0, err_one = 0.0;
  ep::EPConfig two, one;
  one.two_step = false;
  for (int t = 0; t < 1000; ++t) {
    const QTensor a = testing::random_tensor(rng, 1, 64, 12), b = testing::random_tensor(rng, 64, 1, 12);
    int64_t exact = 0;
    for (std::size_t k = 0; k < 64; ++k) exact += int64_t{a.at(0, k)} * b.at(k, 0);
    err_two += std::abs(static_cast<double>(ep::approx_mmul(a, b, two).values[0] - exact));
    err_one += std::abs(static_cast<double>(ep::approx_mmul(a, b, one).values[0] - exact));
  }
  return {err_two < err_one, fmt("4095 values; mean dot error %.1f (two-step) vs %.1f", err_two / 1000, err_one / 1000)};
}

Outcome ablation() {
  using namespace exion::bench;
  const Workload w = gen_workload(WorkloadSpec{});
  const arch::ArchConfig arch;
  RunParams ref;
  ref.n_sparse = 0;
  const RunReport base = run_experiment(w, Config::Base, arch, ref);
  const RunReport ep = run_experiment(w, Config::EP, arch, ref);
  const RunReport ffnr = run_experiment(w, Config::FFNR, arch, RunParams{});
  const RunReport all = run_experiment(w, Config::All, arch, RunParams{});
  const auto cyc = [](const RunReport& r) { return r.cycles.total_cycles; };
  const auto en = [](const RunReport& r) { return r.energy.total_pj; };
  bool ok = cyc(all) <= cyc(ep) && cyc(all) <= cyc(ffnr) && cyc(ffnr) <= cyc(base) && cyc(ep) <= cyc(base);
  ok = ok && en(all) <= en(ep) && en(all) <= en(ffnr) && en(ffnr) <= en(base) && en(ep) <= en(base);
  const double speedup = static_cast<double>(cyc(base)) / static_cast<double>(cyc(all));
  if (all.ffn_mask_sparsity >= 0.7) ok = ok && speedup >= 2.0;
  return {ok, fmt("speedup All %.3f, energy ratio All %.3f, FFN mask sparsity %.3f", speedup, en(all) / en(base),
                  all.ffn_mask_sparsity)};
}

Outcome dense_cycles() {
  testing::Rng rng(8008);
  for (int t = 0; t < 50; ++t) {
    arch::ArchConfig cfg;
    cfg.lanes = static_cast<int>(testing::uniform(rng, 1, 32));
    cfg.dpu_cols = static_cast<int>(testing::uniform(rng, 1, 32));
    cfg.pipeline_fill_cycles = testing::uniform(rng, 0, 8);
    const std::size_t r = testing::uniform(rng, 1, 300), c = testing::uniform(rng, 1, 300),
                      d = testing::uniform(rng, 1, 128);
    const std::size_t l = static_cast<std::size_t>(cfg.lanes), p = static_cast<std::size_t>(cfg.dpu_cols);
    const uint64_t expect = ((r + l - 1) / l) * ((c + p - 1) / p) * (d + cfg.pipeline_fill_cycles);
    if (arch::sim_mmul_dense(r, c, d, cfg).sdue_cycles != expect) return {false, "instance " + std::to_string(t)};
  }
  return {true, "50 randomized shapes"};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
  const std::string cli = EXION_CLI_PATH;
  const std::string tmp = std::string(P_tmpdir) + "/exion_accept_";
  const std::vector<std::pair<std::string, std::string>> cmds{
      {"run", "run --ablation --seed 11 --iterations 20"},
      {"run_csv", "run --config all --seed 11 --iterations 20 --format csv"},
      {"sweep", "sweep --config ffnr --seed 11 --iterations 20 --tau-grid 0.5,1.0 --n-sparse-grid 2,4"},
      {"oracle", "oracle --seed 11 --instances 100"},
  };
  for (const auto& [name, args] : cmds) {
    std::string out[2];
    for (int k = 0; k < 2; ++k) {
      const std::string path = tmp + name + std::to_string(k);
      const std::string cmd = "\"" + cli + "\" " + args + " --out \"" + path + "\" > /dev/null";
      if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + args};
      out[k] = slurp(path);
      std::remove(path.c_str());
    }
    if (out[0].empty() || out[0] != out[1]) return {false, "outputs differ: " + args};
  }
  return {true, std::to_string(cmds.size()) + " commands byte-identical across two runs"};
}

}  // namespace

int main() {
  criterion(1, "merged execution equals dense product", exactness);
  criterion(2, "reuse schedule exactness", ffn_reuse_exactness);
  criterion(3, "compaction trend", compaction_trend);
  criterion(4, "merge-twice floor", merge_twice_floor);
  criterion(5, "sorting reduces merge attempts", sorting_benefit);
  criterion(6, "two-step leading-one detection", ts_lod);
  criterion(7, "ablation ordering", ablation);
  criterion(8, "dense cycle model", dense_cycles);
  criterion(9, "CLI determinism", determinism);
  return failures == 0 ? 0 : 1;
}
