#include <cmath>
#include <string>

#include "doctest.h"
#include "exion/error.hpp"
#include "exion/qtensor.hpp"
#include "support.hpp"

using namespace exion;

namespace {

std::vector<int64_t> naive_gemm(const QTensor& a, const QTensor& w) {
  std::vector<int64_t> out(a.rows() * w.cols(), 0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      int64_t s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += int64_t{a.at(i, k)} * w.at(k, j);
      out[i * w.cols() + j] = s;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("quantize examples") {
  const double zero[] = {0.0}, one[] = {1.0}, neg[] = {-0.4921875};
  CHECK(quantize(zero, {1}, 12, 8).at(0) == 0);
  CHECK(quantize(one, {1}, 12, 8).at(0) == 256);
  CHECK(quantize(neg, {1}, 12, 8).at(0) == -126);
}

TEST_CASE("quantize rounds half away from zero") {
  const double v[] = {0.5 / 256, -0.5 / 256, 1.5 / 256, -1.5 / 256, 0.49 / 256};
  const QTensor q = quantize(v, {5}, 12, 8);
  CHECK(q.at(0) == 1);
  CHECK(q.at(1) == -1);
  CHECK(q.at(2) == 2);
  CHECK(q.at(3) == -2);
  CHECK(q.at(4) == 0);
}

TEST_CASE("quantize overflow names the index") {
  const double v[] = {0.0, 1.0, 8.0};
  try {
    quantize(v, {3}, 12, 8);
    FAIL("expected RangeError");
  } catch (const RangeError& e) {
    CHECK(std::string(e.what()).find('2') != std::string::npos);
  }
  CHECK_THROWS_AS(QTensor({1}, 12, 0, {2048}), RangeError);
  CHECK_NOTHROW(QTensor({2}, 12, 0, {2047, -2048}));
}

TEST_CASE("dequantize examples") {
  CHECK(dequantize(QTensor({1}, 12, 8, {256}))[0] == 1.0);
  CHECK(dequantize(QTensor({1}, 12, 3, {0}))[0] == 0.0);
  CHECK(dequantize(QTensor({1}, 12, 8, {-126}))[0] == -0.4921875);
}

TEST_CASE("quantize round trip error is at most half an LSB") {
  testing::Rng rng(11);
  std::uniform_real_distribution<double> u(-7.9, 7.9);
  for (int scale : {4, 8}) {
    std::vector<double> v(500);
    for (auto& x : v) x = u(rng);
    const auto back = dequantize(quantize(v, {v.size()}, 12, scale));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(back[i] - v[i]) <= std::ldexp(1.0, -scale - 1));
  }
}

TEST_CASE("shift_round and saturate") {
  CHECK(shift_round(3, 1) == 2);
  CHECK(shift_round(-3, 1) == -2);
  CHECK(shift_round(5, 2) == 1);
  CHECK(shift_round(6, 2) == 2);
  CHECK(shift_round(-6, 2) == -2);
  CHECK(shift_round(7, 0) == 7);
  CHECK(shift_round(3, -2) == 12);
  CHECK(saturate(5000, 12) == 2047);
  CHECK(saturate(-5000, 12) == -2048);
  CHECK(fits_bits(-2048, 12));
  CHECK_FALSE(fits_bits(2048, 12));
}

TEST_CASE("mmul_dense examples") {
  const QTensor a({2, 2}, 12, 3, {1, 2, 3, 4});
  const QTensor w({2, 2}, 12, 5, {5, 6, 7, 8});
  const QTensor y = mmul_dense(a, w);
  CHECK(y.scale() == 8);
  CHECK(std::vector<int32_t>(y.data().begin(), y.data().end()) == std::vector<int32_t>{19, 22, 43, 50});

  const QTensor eye({2, 2}, 12, 0, {1, 0, 0, 1});
  const QTensor iw = mmul_dense(eye, w);
  CHECK(std::vector<int32_t>(iw.data().begin(), iw.data().end()) == std::vector<int32_t>(w.data().begin(), w.data().end()));
  CHECK(iw.scale() == 5);

  const QTensor zw = mmul_dense(QTensor::zeros({3, 2}, 12, 0), w);
  for (int32_t v : zw.data()) CHECK(v == 0);
}

TEST_CASE("mmul_dense matches a naive int64 GEMM") {
  testing::Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const std::size_t r = testing::uniform(rng, 1, 40), c = testing::uniform(rng, 1, 40), d = testing::uniform(rng, 1, 70);
    const QTensor a = testing::random_tensor(rng, r, d, 12), w = testing::random_tensor(rng, d, c, 12);
    const auto ref = naive_gemm(a, w);
    const QTensor y = mmul_dense(a, w);
    for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(y.at(i) == ref[i]);
  }
}

TEST_CASE("mmul_dense checks accumulator overflow and operand width") {
  const QTensor a({1, 3}, 16, 0, {32767, 32767, 32767});
  const QTensor w({3, 1}, 16, 0, {32767, 32767, 32767});
  CHECK_THROWS_AS(mmul_dense(a, w), RangeError);
  const QTensor wide({1, 1}, 20, 0, {1});
  CHECK_THROWS_AS(mmul_dense(wide, wide), ContractError);
  CHECK_THROWS_AS(mmul_dense(QTensor::zeros({2, 3}, 12, 0), QTensor::zeros({2, 3}, 12, 0)), ContractError);
}

TEST_CASE("mmul_masked equals dense at mask positions and zero elsewhere") {
  testing::Rng rng(9);
  const QTensor a = testing::random_tensor(rng, 20, 13, 12), w = testing::random_tensor(rng, 13, 17, 12);
  const Bitmask m = testing::random_mask(rng, 20, 17, 0.3);
  const auto got = mmul_masked(a, w, m);
  const auto ref = naive_gemm(a, w);
  CHECK(got.produced == m);
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t j = 0; j < 17; ++j) CHECK(got.values.at(i, j) == (m.get(i, j) ? ref[i * 17 + j] : 0));
  }
}

TEST_CASE("bitmask statistics") {
  CHECK(Bitmask::ones(4, 4).density() == 1.0);
  CHECK(Bitmask(4, 4).sparsity() == 1.0);
  const Bitmask m(2, 2, std::vector<uint8_t>{1, 0, 0, 0});
  CHECK(m.density() == 0.25);
  const auto st = mask_stats(m);
  CHECK(st.per_column_nnz == std::vector<std::size_t>{1, 0});
  CHECK(st.per_row_nnz == std::vector<std::size_t>{1, 0});
  CHECK(st.nnz == 1);

  testing::Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Bitmask r = testing::random_mask(rng, 7, 9, 0.37);
    CHECK(r.density() + r.sparsity() == 1.0);
    CHECK(r.size() == 63);
  }
}

TEST_CASE("add, requantize and slicing helpers") {
  const QTensor a({2}, 12, 4, {2000, -5});
  const QTensor b({2}, 12, 4, {100, -7});
  CHECK(add_checked(a, b).at(0) == 2100);
  CHECK(add_saturating(a, b, 12).at(0) == 2047);
  CHECK_THROWS(add_checked(a, QTensor({2}, 12, 5, {0, 0})));

  const QTensor r = requantize(QTensor({3}, 32, 10, {1536, -1536, 1 << 22}), 12, 8);
  CHECK(r.at(0) == 384);
  CHECK(r.at(1) == -384);
  CHECK(r.at(2) == 2047);

  const QTensor t({2, 3}, 12, 0, {1, 2, 3, 4, 5, 6});
  CHECK(transpose(t).at(2, 1) == 6);
  CHECK(column_slice(t, 1, 2).at(1, 0) == 5);
  CHECK(row_slice(t, 1, 1).at(0, 2) == 6);
}
