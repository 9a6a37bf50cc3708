#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "dispa/ad/tensor.hpp"
#include "dispa/model/dispa_model.hpp"

namespace dispa::testing {

inline ad::Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  ad::Matrix m(r, c);
  for (auto& x : m.data()) x = n(rng);
  return m;
}

inline model::ModelConfig small_config(std::size_t heads = 1) {
  model::ModelConfig c;
  c.n_p = 3;
  c.n_g = 4;
  c.d_e = 8;
  c.d_a = 4;
  c.d = 4;
  c.heads = heads;
  return c;
}

// Plain-loop single-softmax attention: softmax(Q1 K1^T / sqrt(d)) (V1 + V2).
inline ad::Matrix reference_attention(const ad::Matrix& q_in, const ad::Matrix& kv_in, const ad::Matrix& wq,
                                      const ad::Matrix& wk, const ad::Matrix& wv, std::size_t d) {
  const std::size_t nq = q_in.rows(), nk = kv_in.rows(), da = q_in.cols();
  std::vector<std::vector<double>> q1(nq, std::vector<double>(d)), k1(nk, std::vector<double>(d)),
      v(nk, std::vector<double>(d));
  for (std::size_t r = 0; r < nq; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < da; ++i) s += q_in(r, i) * wq(i, c);
      q1[r][c] = s;
    }
  }
  for (std::size_t r = 0; r < nk; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      double sk = 0.0, sv1 = 0.0, sv2 = 0.0;
      for (std::size_t i = 0; i < da; ++i) {
        sk += kv_in(r, i) * wk(i, c);
        sv1 += kv_in(r, i) * wv(i, c);
        sv2 += kv_in(r, i) * wv(i, d + c);
      }
      k1[r][c] = sk;
      v[r][c] = sv1 + sv2;
    }
  }
  ad::Matrix out(nq, d);
  for (std::size_t r = 0; r < nq; ++r) {
    std::vector<double> logits(nk);
    double mx = -INFINITY;
    for (std::size_t j = 0; j < nk; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += q1[r][c] * k1[j][c];
      logits[j] = s / std::sqrt(static_cast<double>(d));
      mx = std::max(mx, logits[j]);
    }
    double z = 0.0;
    for (auto& l : logits) z += (l = std::exp(l - mx));
    for (std::size_t j = 0; j < nk; ++j) {
      for (std::size_t c = 0; c < d; ++c) out(r, c) += logits[j] / z * v[j][c];
    }
  }
  return out;
}

}  // namespace dispa::testing
