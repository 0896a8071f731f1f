// SPDX-License-Identifier: Apache-2.0
#include <doctest/doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mucrasp/common.hpp"
#include "mucrasp/matrix.hpp"

using namespace mucrasp;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (double& x : m.data) x = rng.normal();
  return m;
}

// Naive reference: y[t][o] = sum_i x[t][i] * w[o][i].
Matrix ref_linear(const Matrix& x, const Matrix& w) {
  Matrix y(x.rows, w.rows);
  for (int t = 0; t < x.rows; ++t)
    for (int o = 0; o < w.rows; ++o) {
      long double acc = 0.0L;
      for (int i = 0; i < x.cols; ++i) acc += (long double)x.at(t, i) * w.at(o, i);
      y.at(t, o) = static_cast<double>(acc);
    }
  return y;
}

}  // namespace

TEST_SUITE("matrix") {

TEST_CASE("linear_fwd matches the naive triple loop") {
  Rng rng(1);
  const Matrix x = random_matrix(5, 7, rng);
  const Matrix w = random_matrix(3, 7, rng);
  Matrix y;
  linear_fwd(x, w, y);
  const Matrix ref = ref_linear(x, w);
  REQUIRE(y.same_shape(ref));
  for (size_t i = 0; i < y.size(); ++i)
    CHECK(testing::rel_err(y.data[i], ref.data[i]) < 1e-12);
}

TEST_CASE("matmul_nn matches the naive triple loop") {
  Rng rng(2);
  const Matrix x = random_matrix(4, 6, rng);
  const Matrix w = random_matrix(6, 9, rng);
  Matrix y;
  matmul_nn(x, w, y);
  for (int t = 0; t < 4; ++t)
    for (int o = 0; o < 9; ++o) {
      double acc = 0.0;
      for (int i = 0; i < 6; ++i) acc += x.at(t, i) * w.at(i, o);
      CHECK(testing::rel_err(y.at(t, o), acc) < 1e-12);
    }
}

TEST_CASE("linear backward kernels are the transpose products") {
  Rng rng(3);
  const Matrix x = random_matrix(5, 7, rng);
  const Matrix w = random_matrix(3, 7, rng);
  const Matrix dy = random_matrix(5, 3, rng);

  Matrix dx(5, 7);
  linear_bwd_input(dy, w, dx);
  for (int t = 0; t < 5; ++t)
    for (int i = 0; i < 7; ++i) {
      double acc = 0.0;
      for (int o = 0; o < 3; ++o) acc += dy.at(t, o) * w.at(o, i);
      CHECK(testing::rel_err(dx.at(t, i), acc) < 1e-12);
    }

  Matrix dw(3, 7);
  linear_bwd_weight(dy, x, dw);
  for (int o = 0; o < 3; ++o)
    for (int i = 0; i < 7; ++i) {
      double acc = 0.0;
      for (int t = 0; t < 5; ++t) acc += dy.at(t, o) * x.at(t, i);
      CHECK(testing::rel_err(dw.at(o, i), acc) < 1e-12);
    }
}

TEST_CASE("matmul_nn_bwd accumulates both input and weight gradients") {
  Rng rng(4);
  const Matrix x = random_matrix(4, 5, rng);
  const Matrix w = random_matrix(5, 6, rng);
  const Matrix dy = random_matrix(4, 6, rng);

  Matrix dx(4, 5), dw(5, 6);
  matmul_nn_bwd(dy, x, w, dx, dw);
  for (int t = 0; t < 4; ++t)
    for (int i = 0; i < 5; ++i) {
      double acc = 0.0;
      for (int o = 0; o < 6; ++o) acc += dy.at(t, o) * w.at(i, o);
      CHECK(testing::rel_err(dx.at(t, i), acc) < 1e-12);
    }
  for (int i = 0; i < 5; ++i)
    for (int o = 0; o < 6; ++o) {
      double acc = 0.0;
      for (int t = 0; t < 4; ++t) acc += x.at(t, i) * dy.at(t, o);
      CHECK(testing::rel_err(dw.at(i, o), acc) < 1e-12);
    }
}

TEST_CASE("backward kernels accumulate rather than overwrite") {
  Rng rng(5);
  const Matrix w = random_matrix(3, 7, rng);
  const Matrix dy = random_matrix(2, 3, rng);
  Matrix dx(2, 7);
  for (double& v : dx.data) v = 1.0;
  Matrix expect = dx;
  linear_bwd_input(dy, w, expect);  // expect = 1 + contribution
  Matrix fresh(2, 7);
  linear_bwd_input(dy, w, fresh);
  for (size_t i = 0; i < fresh.size(); ++i)
    CHECK(expect.data[i] == doctest::Approx(1.0 + fresh.data[i]).epsilon(1e-12));
}

TEST_CASE("rng sub-streams are decoupled and deterministic") {
  CHECK(sub_seed(42, "data") == sub_seed(42, "data"));
  CHECK(sub_seed(42, "data") != sub_seed(42, "init"));
  CHECK(sub_seed(42, "data") != sub_seed(43, "data"));

  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) REQUIRE(a.bits() == b.bits());

  Rng c(10);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const int k = c.uniform_int(7);
    REQUIRE(k >= 0);
    REQUIRE(k < 7);
  }

  auto sample = Rng(11).sample_without_replacement(10, 4);
  REQUIRE(sample.size() == 4);
  std::vector<uint8_t> seen(10, 0);
  for (int v : sample) {
    REQUIRE(v >= 0);
    REQUIRE(v < 10);
    REQUIRE(!seen[v]);
    seen[v] = 1;
  }
}

TEST_CASE("parallel_for result is identical for any job count") {
  std::vector<double> one(64), four(64);
  parallel_for(64, 1, [&](int i) { one[i] = std::sqrt(i + 1.0); });
  parallel_for(64, 4, [&](int i) { four[i] = std::sqrt(i + 1.0); });
  CHECK(one == four);
}

}  // TEST_SUITE
