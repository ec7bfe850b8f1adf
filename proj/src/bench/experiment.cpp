#include "exion/bench/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "exion/cfse.hpp"
#include "exion/epredict.hpp"
#include "exion/error.hpp"

namespace exion::bench {

const char* config_name(Config c) {
  switch (c) {
    case Config::Base: return "Base";
    case Config::EP: return "EP";
    case Config::FFNR: return "FFNR";
    case Config::All: return "All";
  }
  return "unknown";
}

Config parse_config(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "base") return Config::Base;
  if (lower == "ep") return Config::EP;
  if (lower == "ffnr") return Config::FFNR;
  if (lower == "all") return Config::All;
  throw ConfigError("unknown config '" + std::string(s) + "' (expected base, ep, ffnr or all)");
}

bool uses_ep(Config c) { return c == Config::EP || c == Config::All; }
bool uses_ffnr(Config c) { return c == Config::FFNR || c == Config::All; }

void RunParams::validate(Config c, int tokens) const {
  if (n_sparse < 0) throw ConfigError("n_sparse must be >= 0");
  if (n_sparse > 0 && !uses_ffnr(c)) {
    throw ConfigError("n_sparse > 0 requires FFN reuse (config ffnr or all); config is " +
                      std::string(config_name(c)));
  }
  if (topk < 1 || topk > tokens) {
    throw ConfigError("topk must be in [1, tokens=" + std::to_string(tokens) + "], got " + std::to_string(topk));
  }
  if (std::isnan(theta_dom) || theta_dom < 0.0) throw ConfigError("theta_dom must be >= 0");
  if (std::isnan(tau)) throw ConfigError("tau must be a number");
  if (!(mse_bound > 0.0)) throw ConfigError("mse_bound must be positive");
}

int64_t RunParams::tau_int(int h_scale) const {
  if (tau < 0.0) return -1;
  return static_cast<int64_t>(std::floor(std::ldexp(tau, h_scale)));
}

int64_t RunParams::theta_int(int score_scale) const {
  const double v = std::ldexp(theta_dom, score_scale);
  if (!(v < 9.0e18)) return std::numeric_limits<int64_t>::max();
  return static_cast<int64_t>(std::floor(v));
}

double relative_mse(std::span<const int32_t> out, std::span<const int32_t> ref) {
  if (out.size() != ref.size()) throw ContractError("relative_mse: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = static_cast<double>(out[i]) - ref[i];
    num += d * d;
    den += static_cast<double>(ref[i]) * ref[i];
  }
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

void compare_to_base(RunReport& r, const RunReport& base) {
  r.rel_mse_vs_base = relative_mse(r.output, base.output);
  r.speedup_vs_base = r.cycles.total_cycles ? static_cast<double>(base.cycles.total_cycles) /
                                                  static_cast<double>(r.cycles.total_cycles)
                                            : 0.0;
  r.energy_ratio_vs_base = base.energy.total_pj > 0.0 ? r.energy.total_pj / base.energy.total_pj : 0.0;
}

namespace {

using arch::CycleStats;
using arch::StageKind;
constexpr int kScoreScale = 2 * kActScale;
constexpr int kSoftmaxScale = 14;

QTensor to_act(const QTensor& acc) { return requantize(acc, kActBits, kActScale); }

QTensor layernorm_act(const QTensor& x) {
  return requantize(cfse::layernorm_rows(x, kActScale, cfse::Mode::Table), kActBits, kActScale);
}

QTensor score_to_act(const ep::ScoreMatrix& s, int from_scale) {
  std::vector<int32_t> v(s.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<int32_t>(saturate(shift_round(s.values[i], from_scale - kActScale), kActBits));
  }
  return QTensor({s.rows, s.cols}, kActBits, kActScale, std::move(v));
}

void add_cfse(CycleStats& st, cfse::Function fn, std::size_t elements, const arch::ArchConfig& cfg) {
  st.cfse_cycles += arch::cfse_cycles(fn, elements, cfg);
  st.cfse_ops += elements * arch::cfse_ops_per_element(fn);
}

// Writes src (R x w) into columns [c0, c0 + w) of a row-major R x D buffer.
void scatter_columns(std::vector<int32_t>& dst, std::size_t d, const QTensor& src, std::size_t c0) {
  for (std::size_t i = 0; i < src.rows(); ++i) {
    for (std::size_t j = 0; j < src.cols(); ++j) dst[i * d + c0 + j] = src.at(i, j);
  }
}

struct LayerTally {
  LayerReport report;
  double mask_sum = 0.0;
  int mask_count = 0;

  void add_mask(double sparsity) {
    mask_sum += sparsity;
    ++mask_count;
  }
};

struct MaskedStep {
  cm::ConMergeResult plan;
  MaskedProduct product;
};

MaskedStep masked_mmul(const QTensor& a, const QTensor& w, const Bitmask& mask, const arch::ArchConfig& cfg) {
  MaskedStep s;
  s.plan = cm::conmerge(mask, cfg.lanes, static_cast<std::size_t>(cfg.dpu_cols));
  s.product = cm::execute_merged(a, w, s.plan.tiles, mask);
  return s;
}

class Runner {
 public:
  Runner(const Workload& w, Config config, const arch::ArchConfig& arch, const RunParams& params,
         const FfnInputHook& hook)
      : w_(w), config_(config), arch_(arch), params_(params), hook_(hook) {
    const auto nb = w.blocks.size();
    attn_.resize(nb);
    ffn_.resize(nb);
    caches_.resize(nb);
    plans_.resize(nb);
    prev_h_.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      attn_[b].report.name = "block" + std::to_string(b) + ".attn";
      ffn_[b].report.name = "block" + std::to_string(b) + ".ffn";
    }
    epc_.k = params.topk;
    epc_.theta_dom = params.theta_int(kScoreScale);
    epc_.two_step = params.two_step;
  }

  RunReport run() {
    const auto& spec = w_.spec;
    const int64_t gamma_q = std::llround(std::ldexp(spec.step_size, 16));
    const auto kinds = ffn::schedule(spec.iterations, uses_ffnr(config_) ? params_.n_sparse : 0);
    QTensor x = w_.x0;
    for (int t = 0; t < spec.iterations; ++t) {
      QTensor s = x;
      for (std::size_t b = 0; b < w_.blocks.size(); ++b) {
        s = attention(b, s);
        s = feed_forward(b, s, kinds[static_cast<std::size_t>(t)], t);
      }
      const QTensor eps = layernorm_act(s);
      std::vector<int32_t> next(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        next[i] = static_cast<int32_t>(saturate(x.at(i) - shift_round(eps.at(i) * gamma_q, 16), kActBits));
      }
      x = QTensor(x.shape(), kActBits, kActScale, std::move(next));
    }
    return finish(x);
  }

 private:
  QTensor attention(std::size_t b, const QTensor& x) {
    const auto& bw = w_.blocks[b];
    const std::size_t t = x.rows(), d = x.cols();
    const auto heads = static_cast<std::size_t>(w_.spec.heads);
    const std::size_t dh = d / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    CycleStats st;
    LayerTally& tally = attn_[b];

    const QTensor a = layernorm_act(x);
    add_cfse(st, cfse::Function::LayerNorm, a.size(), arch_);

    std::vector<int32_t> o(t * d, 0);
    if (!uses_ep(config_)) {
      const QTensor q = to_act(mmul_dense(a, bw.wq));
      const QTensor k = to_act(mmul_dense(a, bw.wk));
      const QTensor v = to_act(mmul_dense(a, bw.wv));
      for (int i = 0; i < 3; ++i) st += arch::sim_mmul_dense(t, d, d, arch_);
      for (std::size_t h = 0; h < heads; ++h) {
        const QTensor qh = column_slice(q, h * dh, dh);
        const QTensor kt = transpose(column_slice(k, h * dh, dh));
        const QTensor vh = column_slice(v, h * dh, dh);
        const QTensor p = softmax_probs(mmul_dense(qh, kt), Bitmask{}, {}, inv_sqrt);
        scatter_columns(o, d, to_act(mmul_dense(p, vh)), h * dh);
        st += arch::sim_mmul_dense(t, t, dh, arch_, 0);
        st += arch::sim_mmul_dense(t, dh, t, arch_, 0);
        add_cfse(st, cfse::Function::Softmax, t * t, arch_);
      }
    } else {
      const QTensor qp = score_to_act(ep::approx_mmul(a, bw.wq, epc_), a.scale() + bw.wq.scale());
      const QTensor kp = score_to_act(ep::approx_mmul(a, bw.wk, epc_), a.scale() + bw.wk.scale());
      st.epre_cycles += 2 * arch::sim_epre(t, d, d, arch_);
      st.log_macs += 2 * t * d * d;

      std::vector<ep::AttnMask> masks;
      Bitmask qmask(t, d), kmask(t, d), vmask(t, d);
      double sparsity = 0.0;
      for (std::size_t h = 0; h < heads; ++h) {
        const auto sp =
            ep::approx_mmul(column_slice(qp, h * dh, dh), transpose(column_slice(kp, h * dh, dh)), epc_);
        st.epre_cycles += arch::sim_epre(t, t, dh, arch_);
        st.log_macs += t * t * dh;
        masks.push_back(ep::predict_attention_mask(sp, epc_));
        const auto& m = masks.back();
        sparsity += m.keep.sparsity();
        for (std::size_t i = 0; i < t; ++i) {
          const bool onehot = m.is_onehot(i);
          for (std::size_t j = 0; j < t; ++j) {
            if (!m.keep.get(i, j)) continue;
            for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) {
              vmask.set(j, c);
              if (!onehot) kmask.set(j, c);
            }
          }
          if (!onehot) {
            for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) qmask.set(i, c);
          }
        }
      }
      tally.add_mask(sparsity / static_cast<double>(heads));

      const auto project = [&](const QTensor& wt, const Bitmask& mask) {
        MaskedStep s = masked_mmul(a, wt, mask, arch_);
        st += arch::sim_mmul_sparse(s.plan, t, d, d, arch_);
        st.cau_cycles += arch::sim_cau(s.plan.stats, arch_);
        tally.report.compaction += s.plan.stats;
        return to_act(s.product.values);
      };
      const QTensor q = project(bw.wq, qmask);
      const QTensor k = project(bw.wk, kmask);
      const QTensor v = project(bw.wv, vmask);

      for (std::size_t h = 0; h < heads; ++h) {
        const auto& m = masks[h];
        Bitmask exact = m.keep;
        for (const auto i : m.onehot_rows) {
          for (std::size_t j = 0; j < t; ++j) exact.set(i, j, false);
        }
        const QTensor qh = column_slice(q, h * dh, dh);
        const QTensor kt = transpose(column_slice(k, h * dh, dh));
        const QTensor vh = column_slice(v, h * dh, dh);
        MaskedStep s = masked_mmul(qh, kt, exact, arch_);
        st += arch::sim_mmul_sparse(s.plan, t, t, dh, arch_, 0);
        st.cau_cycles += arch::sim_cau(s.plan.stats, arch_);
        tally.report.compaction += s.plan.stats;

        const QTensor p = softmax_probs(s.product.values, exact, m.onehot_rows.empty() ? nullptr : &m, inv_sqrt);
        Bitmask nz(t, t);
        for (std::size_t i = 0; i < t; ++i) {
          for (std::size_t j = 0; j < t; ++j) nz.set(i, j, p.at(i, j) != 0);
        }
        scatter_columns(o, d, to_act(mmul_dense(p, vh)), h * dh);
        st += arch::sim_mmul_inner_sparse(nz, dh, arch_, 0);
        add_cfse(st, cfse::Function::Softmax, exact.nnz(), arch_);
      }
    }

    const QTensor y = to_act(mmul_dense(QTensor({t, d}, kActBits, kActScale, std::move(o)), bw.wo));
    st += arch::sim_mmul_dense(t, d, d, arch_);
    add_cfse(st, cfse::Function::Residual, x.size(), arch_);
    arch::close_stage(st, StageKind::Pipelined, arch_);
    tally.report.cycles += st;
    return cfse::residual(x, y, kActBits);
  }

  // Softmax over `keep` (all positions when empty) at 14 bits, one-hot rows
  // forced to 1.0 at their argmax, then requantized to the probability format.
  QTensor softmax_probs(const QTensor& scores, const Bitmask& keep, const ep::AttnMask* onehot, double mult) {
    const QTensor p = cfse::softmax_rows(scores, keep, mult, kSoftmaxScale, cfse::Mode::Table);
    if (onehot == nullptr) return requantize(p, kActBits, kProbScale);
    std::vector<int32_t> v(p.data().begin(), p.data().end());
    const std::size_t c = p.cols();
    for (const auto i : onehot->onehot_rows) {
      for (std::size_t j = 0; j < c; ++j) v[i * c + j] = onehot->keep.get(i, j) ? (1 << kSoftmaxScale) : 0;
    }
    return requantize(QTensor(p.shape(), 16, kSoftmaxScale, std::move(v)), kActBits, kProbScale);
  }

  QTensor feed_forward(std::size_t b, const QTensor& x, ffn::IterKind kind, int iter) {
    const auto& layers = w_.blocks[b].ffn;
    const std::size_t t = x.rows(), d = x.cols(), h = layers.hidden(), h1 = layers.w1.cols();
    const cfse::Function nl = layers.nonlin == ffn::Nonlin::Gelu ? cfse::Function::Gelu : cfse::Function::Geglu;
    CycleStats st;
    LayerTally& tally = ffn_[b];

    const QTensor a = layernorm_act(x);
    add_cfse(st, cfse::Function::LayerNorm, a.size(), arch_);
    if (hook_) hook_(iter, b, a);

    QTensor y, h_now;
    if (!uses_ffnr(config_) || kind == ffn::IterKind::Dense) {
      auto res = ffn::run_dense_iter(a, layers, params_.tau_int(layers.h_scale), params_.baseline);
      st += arch::sim_mmul_dense(t, h1, d, arch_);
      st += arch::sim_mmul_dense(t, d, h, arch_);
      add_cfse(st, nl, t * h, arch_);
      y = std::move(res.y);
      h_now = std::move(res.h);
      if (uses_ffnr(config_)) {
        tally.add_mask(res.cache.mask.sparsity());
        plans_[b] = cm::conmerge(ffn::first_layer_mask(res.cache.mask, layers.nonlin), arch_.lanes,
                                 static_cast<std::size_t>(arch_.dpu_cols));
        st.cau_cycles += arch::sim_cau(plans_[b].stats, arch_);
        tally.report.compaction += plans_[b].stats;
        caches_[b] = std::move(res.cache);
      }
    } else {
      auto& cache = caches_[b];
      const auto& tiles = plans_[b].tiles;
      const ffn::MaskedMmul exec = [&tiles](const QTensor& lhs, const QTensor& w, const Bitmask& m) {
        return cm::execute_merged(lhs, w, tiles, m);
      };
      y = ffn::run_sparse_iter(a, layers, cache, exec);
      st += arch::sim_mmul_sparse(plans_[b], t, h1, d, arch_);
      st += arch::sim_mmul_inner_sparse(cache.mask, d, arch_);
      add_cfse(st, nl, cache.mask.nnz(), arch_);
      h_now = ffn::hidden_dense(a, layers);  // similarity diagnostic only
    }
    if (prev_h_[b].size() != 0) cosines_.push_back(ffn::cosine_similarity(prev_h_[b], h_now));
    prev_h_[b] = std::move(h_now);

    add_cfse(st, cfse::Function::Residual, x.size(), arch_);
    arch::close_stage(st, StageKind::Pipelined, arch_);
    tally.report.cycles += st;
    return cfse::residual(x, to_act(y), kActBits);
  }

  RunReport finish(const QTensor& x) {
    RunReport r;
    r.config = config_;
    r.spec = w_.spec;
    r.params = params_;
    double ffn_sum = 0.0, attn_sum = 0.0;
    for (std::size_t b = 0; b < w_.blocks.size(); ++b) {
      for (LayerTally* tally : {&attn_[b], &ffn_[b]}) {
        auto& lr = tally->report;
        lr.mask_sparsity = tally->mask_count ? tally->mask_sum / tally->mask_count : 0.0;
        lr.compaction.finalize_ratios();
        lr.energy = arch::energy(lr.cycles, arch_);
        r.cycles += lr.cycles;
        r.energy += lr.energy;
        r.compaction += lr.compaction;
        r.layers.push_back(lr);
      }
      attn_sum += attn_[b].report.mask_sparsity;
      ffn_sum += ffn_[b].report.mask_sparsity;
    }
    const auto nb = static_cast<double>(w_.blocks.size());
    r.attn_mask_sparsity = attn_sum / nb;
    r.ffn_mask_sparsity = ffn_sum / nb;
    if (!cosines_.empty()) {
      double s = 0.0;
      for (const double c : cosines_) s += c;
      r.adjacent_cosine_mean = s / static_cast<double>(cosines_.size());
      r.adjacent_cosine_min = *std::min_element(cosines_.begin(), cosines_.end());
    }
    r.checksum = checksum(x);
    r.output.assign(x.data().begin(), x.data().end());
    return r;
  }

  const Workload& w_;
  Config config_;
  const arch::ArchConfig& arch_;
  RunParams params_;
  const FfnInputHook& hook_;
  ep::EPConfig epc_;
  std::vector<LayerTally> attn_, ffn_;
  std::vector<ffn::ReuseCache> caches_;
  std::vector<cm::ConMergeResult> plans_;
  std::vector<QTensor> prev_h_;
  std::vector<double> cosines_;
};

}  // namespace

RunReport run_experiment(const Workload& w, Config config, const arch::ArchConfig& arch, const RunParams& params,
                         const FfnInputHook& hook) {
  w.spec.validate();
  arch.validate();
  params.validate(config, w.spec.tokens);
  Runner runner(w, config, arch, params, hook);
  RunReport r = runner.run();
  if (config == Config::Base) compare_to_base(r, r);
  return r;
}

RunReport replay_trace(const std::vector<TraceTensor>& tensors, Config config, const arch::ArchConfig& arch,
                       const RunParams& params) {
  if (uses_ep(config)) {
    throw ConfigError("trace replay covers the FFN layers only; use --config base or ffnr");
  }
  if (tensors.size() < 3) throw ConfigError("trace replay needs W1, W2 and at least one input tensor");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].dtype != DType::I12 || tensors[i].dims.size() != 2) {
      throw ConfigError("trace tensor " + std::to_string(i) + " must be a rank-2 i12 tensor");
    }
  }
  arch.validate();
  const int iterations = static_cast<int>(tensors.size() - 2);

  ffn::FFNLayerPair layers;
  layers.w1 = from_trace(tensors[0], kWeightScale);
  layers.w2 = from_trace(tensors[1], kWeightScale);
  layers.b1 = QTensor::zeros({layers.w1.cols()}, 16, kWeightScale);
  layers.b2 = QTensor::zeros({layers.w2.cols()}, 16, kWeightScale);
  layers.h_scale = kActScale;
  layers.validate();
  const std::size_t d = layers.w1.rows(), h = layers.hidden(), c = layers.w2.cols();

  std::vector<QTensor> xs;
  for (int i = 0; i < iterations; ++i) {
    xs.push_back(from_trace(tensors[static_cast<std::size_t>(i) + 2], kActScale));
    if (xs.back().cols() != d) {
      throw ConfigError("trace tensor " + std::to_string(i + 2) + " has " + std::to_string(xs.back().cols()) +
                        " columns, W1 expects " + std::to_string(d));
    }
  }
  if (params.n_sparse < 0) throw ConfigError("n_sparse must be >= 0");
  if (params.n_sparse > 0 && !uses_ffnr(config)) throw ConfigError("n_sparse > 0 requires config ffnr");

  RunReport r;
  r.config = config;
  r.params = params;
  r.trace_replay = true;
  r.spec.blocks = 1;
  r.spec.d_model = static_cast<int>(d);
  r.spec.d_hidden = static_cast<int>(h);
  r.spec.iterations = iterations;
  r.spec.tokens = static_cast<int>(xs.front().rows());
  r.spec.heads = 1;

  LayerReport lr;
  lr.name = "trace.ffn";
  std::vector<int32_t> out, ref;
  const auto kinds = ffn::schedule(iterations, uses_ffnr(config) ? params.n_sparse : 0);
  const int64_t tau = params.tau_int(layers.h_scale);
  ffn::ReuseCache cache;
  cm::ConMergeResult plan;
  double mask_sum = 0.0;
  int masks = 0;
  for (int i = 0; i < iterations; ++i) {
    const QTensor& x = xs[static_cast<std::size_t>(i)];
    const std::size_t t = x.rows();
    CycleStats st;
    auto dense = ffn::run_dense_iter(x, layers, tau, params.baseline);
    const QTensor y_ref = to_act(dense.y);
    ref.insert(ref.end(), y_ref.data().begin(), y_ref.data().end());
    QTensor y;
    if (!uses_ffnr(config) || kinds[static_cast<std::size_t>(i)] == ffn::IterKind::Dense) {
      st += arch::sim_mmul_dense(t, h, d, arch);
      st += arch::sim_mmul_dense(t, c, h, arch);
      add_cfse(st, cfse::Function::Gelu, t * h, arch);
      y = dense.y;
      if (uses_ffnr(config)) {
        mask_sum += dense.cache.mask.sparsity();
        ++masks;
        plan = cm::conmerge(dense.cache.mask, arch.lanes, static_cast<std::size_t>(arch.dpu_cols));
        st.cau_cycles += arch::sim_cau(plan.stats, arch);
        lr.compaction += plan.stats;
        cache = std::move(dense.cache);
      }
    } else {
      const auto& tiles = plan.tiles;
      const ffn::MaskedMmul exec = [&tiles](const QTensor& lhs, const QTensor& w, const Bitmask& m) {
        return cm::execute_merged(lhs, w, tiles, m);
      };
      y = ffn::run_sparse_iter(x, layers, cache, exec);
      st += arch::sim_mmul_sparse(plan, t, h, d, arch);
      st += arch::sim_mmul_inner_sparse(cache.mask, c, arch);
      add_cfse(st, cfse::Function::Gelu, cache.mask.nnz(), arch);
    }
    const QTensor y_act = to_act(y);
    out.insert(out.end(), y_act.data().begin(), y_act.data().end());
    arch::close_stage(st, StageKind::Pipelined, arch);
    lr.cycles += st;
  }
  lr.mask_sparsity = masks ? mask_sum / masks : 0.0;
  lr.compaction.finalize_ratios();
  lr.energy = arch::energy(lr.cycles, arch);
  r.cycles = lr.cycles;
  r.energy = lr.energy;
  r.compaction = lr.compaction;
  r.ffn_mask_sparsity = lr.mask_sparsity;
  r.layers.push_back(lr);
  r.rel_mse_vs_base = relative_mse(out, ref);
  const QTensor all({out.size()}, kActBits, kActScale, out);
  r.checksum = checksum(all);
  r.output = std::move(out);
  return r;
}

RunParams parse_run_params(std::string_view text, const std::string& source, RunParams p) {
  std::size_t line_no = 0;
  const auto trim = [](std::string_view v) {
    const auto b = v.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return std::string_view{};
    return v.substr(b, v.find_last_not_of(" \t\r") - b + 1);
  };
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
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    try {
      std::size_t used = 0;
      if (key == "tau") {
        p.tau = std::stod(value, &used);
      } else if (key == "n_sparse") {
        p.n_sparse = std::stoi(value, &used);
      } else if (key == "topk") {
        p.topk = std::stoi(value, &used);
      } else if (key == "theta_dom") {
        p.theta_dom = value == "inf" ? std::numeric_limits<double>::infinity() : std::stod(value, &used);
        if (value == "inf") used = value.size();
      } else if (key == "two_step") {
        if (value != "on" && value != "off") throw ConfigError("expected on or off");
        p.two_step = value == "on";
        used = value.size();
      } else if (key == "baseline") {
        if (value != "running" && value != "frozen") throw ConfigError("expected running or frozen");
        p.baseline = value == "running" ? ffn::Baseline::Running : ffn::Baseline::Frozen;
        used = value.size();
      } else if (key == "mse_bound") {
        p.mse_bound = std::stod(value, &used);
      } else {
        throw ConfigError(where + "unknown key '" + key + "'");
      }
      if (used != value.size()) throw ConfigError("bad value '" + value + "'");
    } catch (const ConfigError& e) {
      if (std::string_view(e.what()).starts_with(where)) throw;
      throw ConfigError(where + key + ": " + e.what());
    } catch (const std::exception&) {
      throw ConfigError(where + key + ": bad value '" + value + "'");
    }
  }
  return p;
}

RunParams load_run_params(const std::string& path, RunParams defaults) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open params file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_params(ss.str(), path, defaults);
}

std::vector<SweepPoint> sweep(const Workload& w, Config config, const arch::ArchConfig& arch, const RunParams& base,
                              const SweepGrid& grid) {
  const auto or_default = [](auto v, auto d) {
    if (v.empty()) v.push_back(d);
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto taus = or_default(grid.tau, base.tau);
  const auto ns = or_default(grid.n_sparse, base.n_sparse);
  const auto ks = or_default(grid.topk, base.topk);
  const auto thetas = or_default(grid.theta_dom, base.theta_dom);

  RunParams base_params = base;
  base_params.n_sparse = 0;
  const RunReport reference = run_experiment(w, Config::Base, arch, base_params);

  std::vector<SweepPoint> out;
  for (const double tau : taus) {
    for (const int n : ns) {
      for (const int k : ks) {
        for (const double theta : thetas) {
          RunParams p = base;
          p.tau = tau;
          p.n_sparse = n;
          p.topk = k;
          p.theta_dom = theta;
          SweepPoint pt{tau, n, k, theta, run_experiment(w, config, arch, p)};
          compare_to_base(pt.report, reference);
          out.push_back(std::move(pt));
        }
      }
    }
  }
  return out;
}

}  // namespace exion::bench
