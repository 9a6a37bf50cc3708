#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/op_cases.hpp"
#include "dispa/ad/tensor.hpp"

using namespace dispa;
using namespace dispa::ad;

using testing::dot_all;
using testing::op_cases;
using testing::random_matrix;

TEST_CASE("matrix basics") {
  Matrix a{{1, 2}, {3, 4}};
  Matrix b{{0, 1}, {1, 0}};
  CHECK(matmul(a, b) == Matrix{{2, 1}, {4, 3}});
  CHECK(transpose(a) == Matrix{{1, 3}, {2, 4}});
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(matmul(a, Matrix(3, 1)), ShapeError);
}

TEST_CASE("softmax examples") {
  Tape t;
  auto x = t.constant(Matrix{{0.0, 0.0}, {0.0, std::log(3.0)}, {5.0, 5.0 + std::log(3.0)}});
  const auto& y = softmax_rows(x).value();
  CHECK(y(0, 0) == doctest::Approx(0.5));
  CHECK(y(1, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(y(1, 1) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(std::abs(y(2, 0) - y(1, 0)) < 1e-12);
  auto big = t.constant(Matrix{{1000.0, 0.0, -1000.0}});
  const auto& z = softmax_rows(big).value();
  CHECK(z.all_finite());
  CHECK(z(0, 0) + z(0, 1) + z(0, 2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one") {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    Tape t;
    const auto& y = softmax_rows(t.constant(random_matrix(rng, 4, 7, 10.0))).value();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double s = 0.0;
      for (double v : y.row(r)) s += v;
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("mse examples") {
  Tape t;
  auto p = t.variable(Matrix{{0.0}});
  auto q = t.constant(Matrix{{2.0}});
  auto l = mse(p, q);
  CHECK(l.value()(0, 0) == 4.0);
  auto g = t.backward(l);
  CHECK(g[p](0, 0) == -4.0);
  Tape t2;
  auto a = t2.constant(Matrix{{1.0}, {2.0}});
  CHECK(mse(a, a).value()(0, 0) == 0.0);
  CHECK_THROWS_AS(mse(a, t2.constant(Matrix{{1.0, 2.0}})), ShapeError);
}

TEST_CASE("backward examples") {
  Tape t;
  auto x = t.variable(Matrix{{1, 2}, {3, 4}});
  auto unused = t.variable(Matrix{{7, 7, 7}});
  auto g = t.backward(sum(x));
  CHECK(g[x] == Matrix(2, 2, 1.0));
  CHECK(g[unused] == Matrix(1, 3, 0.0));
  CHECK_THROWS_AS(t.backward(x), ShapeError);

  // reused node accumulates from both uses
  Tape t2;
  auto y = t2.variable(Matrix{{3.0}});
  auto g2 = t2.backward(sum(add(y, scale(y, 2.0))));
  CHECK(g2[y](0, 0) == 3.0);
}

TEST_CASE("mse of linear map matches finite differences") {
  std::mt19937_64 rng(3);
  const auto W = random_matrix(rng, 3, 4), X = random_matrix(rng, 4, 1), Y = random_matrix(rng, 3, 1);
  auto f = [&](Tape& t, std::span<const Tensor> in) { return mse(matmul(in[0], t.constant(X)), t.constant(Y)); };
  const auto r = grad_check(f, {W});
  CHECK_FALSE(r.skipped);
  CHECK(r.max_rel_error < 1e-5);
  auto lin = [&](Tape& t, std::span<const Tensor> in) { return dot_all(t, matmul(in[0], t.constant(X)), 1); };
  CHECK(grad_check(lin, {W}).max_rel_error < 1e-7);
}

TEST_CASE("grad_check skips exact kinks") {
  auto f = [](Tape&, std::span<const Tensor> in) { return sum(relu(in[0])); };
  CHECK(grad_check(f, {Matrix{{0.0, 1.0}}}).skipped);
  const auto r = grad_check(f, {Matrix{{1e-3, 1.0}}});
  CHECK_FALSE(r.skipped);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("every op passes grad_check at five seeds") {
  for (const auto& op : op_cases()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      CAPTURE(op.name);
      CAPTURE(seed);
      const auto point = testing::op_point(op, seed);
      const auto res = grad_check(op.f, point);
      CHECK_FALSE(res.skipped);
      CHECK(res.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("non-finite values are rejected") {
  Tape t;
  CHECK_THROWS_AS(t.constant(Matrix{{NAN}}), NonFiniteError);
  auto x = t.constant(Matrix{{800.0}});
  CHECK_THROWS_AS(exp(x), NonFiniteError);
}

TEST_CASE("backward is deterministic") {
  std::mt19937_64 rng(9);
  const auto A = random_matrix(rng, 5, 5), B = random_matrix(rng, 5, 3);
  auto run = [&] {
    Tape t;
    auto a = t.variable(A);
    auto b = t.variable(B);
    auto l = sum(softmax_rows(matmul(relu(a), b)));
    auto g = t.backward(dot_all(t, matmul(relu(a), b), 4));
    (void)l;
    return std::make_pair(g[a], g[b]);
  };
  CHECK(run() == run());
}
