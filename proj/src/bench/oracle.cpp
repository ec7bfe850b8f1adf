#include "exion/bench/oracle.hpp"

#include <random>

#include "exion/bench/trace.hpp"
#include "exion/conmerge.hpp"
#include "exion/epredict.hpp"
#include "exion/ffn_reuse.hpp"
#include "exion/simd/kernels.hpp"
#include "json.hpp"

namespace exion::bench {

bool OracleSummary::ok() const noexcept {
  for (const auto& c : checks) {
    if (c.failures != 0) return false;
  }
  return true;
}

namespace {

using Rng = std::mt19937_64;

std::size_t uniform(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

QTensor random_tensor(Rng& rng, std::size_t r, std::size_t c, int bits, int scale = 0) {
  const int32_t lim = (1 << (bits - 1)) - 1;
  std::uniform_int_distribution<int32_t> dist(-lim - 1, lim);
  std::vector<int32_t> v(r * c);
  for (auto& x : v) x = dist(rng);
  return QTensor({r, c}, bits, scale, std::move(v));
}

Bitmask random_mask(Rng& rng, std::size_t r, std::size_t c, double density) {
  std::bernoulli_distribution keep(density);
  Bitmask m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) m.set(i, j, keep(rng));
  }
  return m;
}

template <typename Fn>
OracleCheck run_check(const std::string& name, std::size_t n, Fn&& fn) {
  OracleCheck c;
  c.name = name;
  c.instances = n;
  for (std::size_t i = 0; i < n; ++i) {
    std::string why;
    try {
      if (fn(i, why)) continue;
    } catch (const std::exception& e) {
      why = e.what();
    }
    if (c.failures++ == 0) c.first_failure = "instance " + std::to_string(i) + ": " + why;
  }
  return c;
}

}  // namespace

OracleSummary run_oracles(uint64_t seed, std::size_t instances) {
  OracleSummary s;
  s.seed = seed;
  Rng rng(seed);

  s.checks.push_back(run_check("merged_vs_dense", instances, [&](std::size_t, std::string& why) {
    const std::size_t r = uniform(rng, 1, 64), c = uniform(rng, 1, 64), d = uniform(rng, 1, 32);
    const double sparsity = std::uniform_real_distribution<double>(0.5, 0.99)(rng);
    const std::size_t ps[] = {1, 4, 16};
    const std::size_t p = ps[uniform(rng, 0, 2)];
    const QTensor a = random_tensor(rng, r, d, 12), w = random_tensor(rng, d, c, 12);
    const Bitmask m = random_mask(rng, r, c, 1.0 - sparsity);
    const auto plan = cm::conmerge(m, 16, p);
    const auto got = cm::execute_merged(a, w, plan.tiles, m);
    const QTensor ref = mmul_dense(a, w);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) {
        if (m.get(i, j) && got.values.at(i, j) != ref.at(i, j)) {
          why = "mismatch at (" + std::to_string(i) + ", " + std::to_string(j) + ")";
          return false;
        }
      }
    }
    return true;
  }));

  s.checks.push_back(run_check("ffn_reuse_all_ones", std::max<std::size_t>(1, instances / 50),
                               [&](std::size_t, std::string& why) {
    const std::size_t t = uniform(rng, 1, 16), d = uniform(rng, 1, 16), h = uniform(rng, d, 32);
    ffn::FFNLayerPair layers;
    layers.w1 = random_tensor(rng, d, h, 12, 10);
    layers.b1 = QTensor::zeros({h}, 16, 10);
    layers.w2 = random_tensor(rng, h, d, 12, 10);
    layers.b2 = QTensor::zeros({d}, 16, 10);
    const auto kinds = ffn::schedule(20, 3);
    ffn::ReuseCache cache;
    for (std::size_t it = 0; it < kinds.size(); ++it) {
      const QTensor x = random_tensor(rng, t, d, 12, 8);
      auto dense = ffn::run_dense_iter(x, layers, -1);
      if (kinds[it] == ffn::IterKind::Dense) {
        cache = dense.cache;
        continue;
      }
      if (!(ffn::run_sparse_iter(x, layers, cache) == dense.y)) {
        why = "sparse iteration " + std::to_string(it) + " differs from dense";
        return false;
      }
    }
    return true;
  }));

  const auto& active = simd::kernels();
  const auto& scalar = simd::scalar_kernels();
  s.checks.push_back(run_check(std::string("simd_") + std::string(simd::isa_name(active.isa)) + "_vs_scalar",
                               instances, [&](std::size_t, std::string& why) {
    const std::size_t n = uniform(rng, 0, 300);
    std::uniform_int_distribution<int> v16(-32768, 32767);
    std::vector<int16_t> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int16_t>(v16(rng));
      b[i] = static_cast<int16_t>(v16(rng));
    }
    if (active.dot_i16(a.data(), b.data(), n) != scalar.dot_i16(a.data(), b.data(), n)) {
      why = "dot_i16 differs at n=" + std::to_string(n);
      return false;
    }
    std::vector<int32_t> sa(n), ha(n), la(n), sb(n), hb(n), lb(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ea = ep::ts_lod(a[i] >> 4), eb = ep::ts_lod(b[i] >> 4);
      sa[i] = ea.sign;
      ha[i] = ea.exp_count > 0 ? ea.exps[0] : simd::kNoExp;
      la[i] = ea.exp_count > 1 ? ea.exps[1] : simd::kNoExp;
      sb[i] = eb.sign;
      hb[i] = eb.exp_count > 0 ? eb.exps[0] : simd::kNoExp;
      lb[i] = eb.exp_count > 1 ? eb.exps[1] : simd::kNoExp;
    }
    const simd::LogSpan x{sa.data(), ha.data(), la.data()}, y{sb.data(), hb.data(), lb.data()};
    if (active.log_dot(x, y, n) != scalar.log_dot(x, y, n)) {
      why = "log_dot differs at n=" + std::to_string(n);
      return false;
    }
    return true;
  }));

  s.checks.push_back(run_check("trace_roundtrip", std::max<std::size_t>(1, instances / 10),
                               [&](std::size_t, std::string& why) {
    std::vector<TraceTensor> ts;
    const std::size_t count = uniform(rng, 0, 4);
    for (std::size_t k = 0; k < count; ++k) {
      TraceTensor t;
      t.dtype = static_cast<DType>(uniform(rng, 1, 3));
      t.dims = {uniform(rng, 0, 5), uniform(rng, 1, 7)};
      const int bits = dtype_bits(t.dtype);
      const int64_t lim = (int64_t{1} << (bits - 1)) - 1;
      std::uniform_int_distribution<int64_t> dist(-lim - 1, lim);
      for (std::size_t e = 0; e < element_count(t.dims); ++e) t.data.push_back(static_cast<int32_t>(dist(rng)));
      ts.push_back(std::move(t));
    }
    if (parse_trace(serialize_trace(ts)) != ts) {
      why = "round trip changed the tensors";
      return false;
    }
    return true;
  }));
  return s;
}

std::string oracle_json(const OracleSummary& s) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = 1;
  doc["seed"] = s.seed;
  doc["ok"] = s.ok();
  doc["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : s.checks) {
    doc["checks"].push_back({{"name", c.name},
                             {"instances", c.instances},
                             {"failures", c.failures},
                             {"first_failure", c.first_failure}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace exion::bench
