#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "../support/model_fixtures.hpp"
#include "dispa/model/dispa_model.hpp"
#include "dispa/util/error.hpp"

using namespace dispa;
using namespace dispa::model;
using ad::Matrix;
using testing::random_matrix;

namespace {

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(perm[r], c);
  }
  return out;
}

double row_sum(const Matrix& m, std::size_t r) {
  double s = 0.0;
  for (double v : m.row(r)) s += v;
  return s;
}

struct Inputs {
  Matrix path, drug, sub;
};

Inputs random_inputs(std::mt19937_64& rng, const ModelConfig& c, std::size_t n_s) {
  return {random_matrix(rng, c.n_p, c.n_g), random_matrix(rng, 1, c.d_e), random_matrix(rng, n_s, c.d_e)};
}

}  // namespace

TEST_CASE("config validation and hash") {
  auto c = testing::small_config();
  CHECK_NOTHROW(c.validate());
  auto other = c;
  other.d_a = 8;
  CHECK(c.hash() != other.hash());
  other = c;
  other.layers = 2;
  CHECK_THROWS(other.validate());
  other = c;
  other.heads = 3;
  CHECK_THROWS(other.validate());
  other = c;
  other.dropout = 0.1;
  CHECK_THROWS(other.validate());
}

TEST_CASE("encode_features shapes and row-wise behaviour") {
  std::mt19937_64 rng(1);
  const auto c = testing::small_config();
  auto params = ModelParams::init(c, 7);
  const auto in = random_inputs(rng, c, 5);
  ad::Tape t;
  auto b = bind(t, params, false);
  const auto enc = encode_features(b, t.constant(in.path), t.constant(in.drug), t.constant(in.sub));
  CHECK(enc.path.rows() == 3);
  CHECK(enc.path.cols() == c.d_a);
  CHECK(enc.drug.rows() == 1);
  CHECK(enc.sub.rows() == 5);

  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  const auto enc2 = encode_features(b, t.constant(in.path), t.constant(in.drug), t.constant(permute_rows(in.sub, perm)));
  CHECK(enc2.sub.value() == permute_rows(enc.sub.value(), perm));

  auto zero = params;
  for (auto id : {kPathW1, kPathW2}) zero.tensors[id] = Matrix(zero.tensors[id].rows(), zero.tensors[id].cols());
  zero.tensors[kPathB2] = Matrix(1, c.d_a, 0.25);
  ad::Tape t2;
  auto bz = bind(t2, zero, false);
  const auto ez = encode_features(bz, t2.constant(in.path), t2.constant(in.drug), t2.constant(in.sub));
  for (std::size_t r = 0; r < 3; ++r) CHECK(std::vector<double>(ez.path.value().row(r).begin(), ez.path.value().row(r).end()) == std::vector<double>(c.d_a, 0.25));

  ad::Tape t3;
  auto b3 = bind(t3, params, false);
  CHECK_THROWS_AS(encode_features(b3, t3.constant(Matrix(3, 5)), t3.constant(in.drug), t3.constant(in.sub)), ShapeError);
  CHECK_THROWS_AS(encode_features(b3, t3.constant(Matrix(2, 4)), t3.constant(in.drug), t3.constant(in.sub)), ShapeError);
}

TEST_CASE("lambda zero reduces to standard attention") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> dim(1, 6), rows(1, 9);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = testing::small_config();
    c.d_a = dim(rng);
    c.d = dim(rng);
    c.lambda_override = 0.0;
    const auto params = ModelParams::init(c, 100 + trial);
    const auto q_in = random_matrix(rng, rows(rng), c.d_a), kv_in = random_matrix(rng, rows(rng), c.d_a);
    ad::Tape t;
    auto b = bind(t, params, false);
    const auto out = diff_attention(b, View::kPath2Sub, t.constant(q_in), t.constant(kv_in));
    const auto ref = testing::reference_attention(q_in, kv_in, params.tensors[kP2SWq], params.tensors[kP2SWk],
                                                  params.tensors[kP2SWv], c.d);
    CHECK(ad::max_abs_diff(out.output.value(), ref) < 1e-12);
    CHECK(out.components.lambda == 0.0);
  }
}

TEST_CASE("net attention rows sum to one minus lambda") {
  std::mt19937_64 rng(3);
  for (std::size_t heads : {1, 2, 4}) {
    for (int trial = 0; trial < 20; ++trial) {
      auto c = testing::small_config(heads);
      c.d_a = 8;
      c.d = 8;
      auto params = ModelParams::init(c, trial);
      for (auto id : {kP2SLq1, kP2SLk1, kP2SLq2, kP2SLk2}) params.tensors[id] = random_matrix(rng, 1, 8, 0.3);
      ad::Tape t;
      auto b = bind(t, params, false);
      const auto out = diff_attention(b, View::kPath2Sub, t.constant(random_matrix(rng, 4, 8)), t.constant(random_matrix(rng, 6, 8)));
      const auto& comp = out.components;
      CHECK(comp.lambda >= 0.0);
      CHECK(comp.lambda <= 0.99);
      for (std::size_t r = 0; r < 4; ++r) {
        CHECK(std::abs(row_sum(comp.softmax1, r) - 1.0) < 1e-9);
        CHECK(std::abs(row_sum(comp.softmax2, r) - 1.0) < 1e-9);
        CHECK(std::abs(row_sum(comp.net, r) - (1.0 - comp.lambda)) < 1e-9);
      }
    }
  }
}

TEST_CASE("single key and identical halves") {
  std::mt19937_64 rng(4);
  auto c = testing::small_config();
  auto params = ModelParams::init(c, 5);
  ad::Tape t;
  auto b = bind(t, params, false);
  const auto h_path = random_matrix(rng, 3, c.d_a), h_sub = random_matrix(rng, 1, c.d_a);
  const auto out = path2sub(b, t.constant(h_path), t.constant(h_sub));
  CHECK(out.output.rows() == 3);
  CHECK(out.output.cols() == c.attn_width());
  const double lam = out.components.lambda;
  const auto& wv = params.tensors[kP2SWv];
  for (std::size_t col = 0; col < c.d; ++col) {
    double v = 0.0;
    for (std::size_t i = 0; i < c.d_a; ++i) v += h_sub(0, i) * (wv(i, col) + wv(i, c.d + col));
    for (std::size_t r = 0; r < 3; ++r) CHECK(out.output.value()(r, col) == doctest::Approx((1.0 - lam) * v).epsilon(1e-12));
  }
  const auto one_path = drug2path(b, t.constant(random_matrix(rng, 1, c.d_a)), t.constant(random_matrix(rng, 1, c.d_a)));
  CHECK(one_path.output.rows() == 1);
  CHECK(one_path.components.net(0, 0) == doctest::Approx(1.0 - one_path.components.lambda));

  // identical Q and K halves give net = (1 - lambda) * softmax1
  auto sym = params;
  for (auto id : {kP2SWq, kP2SWk}) {
    auto& w = sym.tensors[id];
    for (std::size_t i = 0; i < w.rows(); ++i) {
      for (std::size_t col = 0; col < c.d; ++col) w(i, c.d + col) = w(i, col);
    }
  }
  ad::Tape t2;
  auto bs = bind(t2, sym, false);
  const auto so = path2sub(bs, t2.constant(h_path), t2.constant(random_matrix(rng, 5, c.d_a)));
  const auto& comp = so.components;
  for (std::size_t r = 0; r < comp.net.rows(); ++r) {
    for (std::size_t k = 0; k < comp.net.cols(); ++k) CHECK(std::abs(comp.net(r, k) - (1.0 - comp.lambda) * comp.softmax1(r, k)) < 1e-12);
  }
}

TEST_CASE("duplicated substructure splits attention evenly") {
  std::mt19937_64 rng(5);
  const auto c = testing::small_config();
  const auto params = ModelParams::init(c, 9);
  const auto h_path = random_matrix(rng, 3, c.d_a);
  auto sub = random_matrix(rng, 3, c.d_a);
  Matrix dup(4, c.d_a);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t col = 0; col < c.d_a; ++col) dup(r, col) = sub(r, col);
  }
  for (std::size_t col = 0; col < c.d_a; ++col) dup(3, col) = sub(1, col);
  ad::Tape t;
  auto b = bind(t, params, false);
  const auto one = path2sub(b, t.constant(h_path), t.constant(sub)).components;
  const auto two = path2sub(b, t.constant(h_path), t.constant(dup)).components;
  for (std::size_t r = 0; r < 3; ++r) {
    for (const auto* pair : {&one.softmax1, &one.softmax2}) {
      const auto& m1 = *pair;
      const auto& m2 = pair == &one.softmax1 ? two.softmax1 : two.softmax2;
      CHECK(m2(r, 1) == doctest::Approx(m2(r, 3)).epsilon(1e-12));
      // the duplicated key takes the same share of mass relative to the unique ones
      const double ratio1 = m1(r, 1) / m1(r, 0);
      const double ratio2 = m2(r, 1) / m2(r, 0);
      CHECK(ratio2 == doctest::Approx(ratio1).epsilon(1e-9));
    }
  }
}

TEST_CASE("drug2path is equivariant to pathway order") {
  std::mt19937_64 rng(6);
  const auto c = testing::small_config();
  const auto params = ModelParams::init(c, 11);
  const auto h_drug = random_matrix(rng, 1, c.d_a), h_path = random_matrix(rng, 3, c.d_a);
  const std::vector<std::size_t> perm{2, 0, 1};
  ad::Tape t;
  auto b = bind(t, params, false);
  const auto a = drug2path(b, t.constant(h_drug), t.constant(h_path));
  const auto p = drug2path(b, t.constant(h_drug), t.constant(permute_rows(h_path, perm)));
  CHECK(ad::max_abs_diff(a.output.value(), p.output.value()) < 1e-12);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(p.components.net(0, k) - a.components.net(0, perm[k])) < 1e-12);
}

TEST_CASE("prediction invariances") {
  std::mt19937_64 rng(7);
  auto c = testing::small_config();
  const auto params = ModelParams::init(c, 13);
  const auto in = random_inputs(rng, c, 4);
  AttentionRecord rec;
  const double y = predict(params, in.path, in.drug, in.sub, &rec);
  CHECK(std::isfinite(y));
  CHECK(rec.path2sub.net.rows() == c.n_p);
  CHECK(rec.path2sub.net.cols() == 4);
  CHECK(rec.drug2path.net.cols() == c.n_p);
  CHECK(std::abs(predict(params, in.path, in.drug, permute_rows(in.sub, {2, 3, 0, 1})) - y) < 1e-12);
  CHECK(std::abs(predict(params, permute_rows(in.path, {1, 2, 0}), in.drug, in.sub) - y) < 1e-12);

  auto flat = params;
  flat.tensors[kHeadW1] = Matrix(flat.tensors[kHeadW1].rows(), flat.tensors[kHeadW1].cols());
  flat.tensors[kHeadW2] = Matrix(flat.tensors[kHeadW2].rows(), 1);
  flat.tensors[kHeadB2] = Matrix(1, 1, -1.25);
  for (int k = 0; k < 3; ++k) {
    const auto r = random_inputs(rng, c, 1 + k);
    CHECK(predict(flat, r.path, r.drug, r.sub) == -1.25);
  }
}

TEST_CASE("full model passes grad_check") {
  for (std::size_t heads : {1, 2}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      CAPTURE(seed);
      std::mt19937_64 rng(seed);
      auto c = testing::small_config(heads);
      auto params = ModelParams::init(c, seed);
      for (auto id : {kP2SLq1, kP2SLk1, kP2SLq2, kP2SLk2, kD2PLq1, kD2PLk1, kD2PLq2, kD2PLk2}) {
        params.tensors[id] = random_matrix(rng, 1, c.d, 0.3);
      }
      const auto in = random_inputs(rng, c, 3);
      const Matrix target{{0.7}};
      std::vector<Matrix> point(params.tensors.begin(), params.tensors.end());
      auto f = [&](ad::Tape& t, std::span<const ad::Tensor> x) {
        BoundParams b;
        b.config = &params.config;
        for (std::size_t i = 0; i < kParamCount; ++i) b.t[i] = x[i];
        const auto r = forward(b, t.constant(in.path), t.constant(in.drug), t.constant(in.sub));
        return ad::mse(r.prediction, t.constant(target));
      };
      const auto res = ad::grad_check(f, point);
      CHECK_FALSE(res.skipped);
      CHECK(res.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  auto c = testing::small_config(2);
  c.lambda_init = 0.3;
  c.layer_norm = true;
  const auto params = ModelParams::init(c, 21);
  const auto path = std::filesystem::temp_directory_path() / "dispa_ckpt_test.ckpt";
  save_checkpoint(path, params, {"stats.csv", "unit test"});
  CheckpointMeta meta;
  const auto back = load_checkpoint(path, &meta);
  CHECK(back.tensors == params.tensors);
  CHECK(back.config.hash() == params.config.hash());
  CHECK(back.config.layer_norm);
  CHECK(meta.stats_ref == "stats.csv");
  CHECK(meta.note == "unit test");
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path));
}
