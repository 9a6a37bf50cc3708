#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dispa/analysis/stats.hpp"
#include "dispa/train/metrics.hpp"
#include "dispa/util/error.hpp"
#include "dispa/util/random.hpp"

using namespace dispa;
using namespace dispa::analysis;

namespace {

std::vector<double> draw(rnd::Engine& rng, std::size_t n, double shift = 0.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rnd::normal(rng) + shift;
  return v;
}

// O(n^2) reference Pearson and Spearman, written without shared helpers.
double brute_pcc(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / n, mb = sb / n;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> brute_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : x) {
      less += y < x[i];
      equal += y == x[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

}  // namespace

TEST_CASE("tanimoto examples") {
  CHECK(tanimoto({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(tanimoto({1, 2}, {3, 4}) == 0.0);
  CHECK(tanimoto({1, 2}, {2, 3}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(tanimoto({}, {7}) == 0.0);
  CHECK_THROWS_AS(tanimoto({}, {}), Error);
}

TEST_CASE("rank-sum exact enumeration") {
  const std::vector<double> a{1, 2}, b{3, 4};
  auto r = wilcoxon_rank_sum(a, b, Alternative::kLess);
  CHECK(r.exact);
  CHECK(r.u == 0.0);
  CHECK(r.p == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(wilcoxon_rank_sum(a, b, Alternative::kGreater).p == doctest::Approx(1.0));
  CHECK_THROWS_AS(wilcoxon_rank_sum(std::vector<double>{}, b), Error);
  CHECK_THROWS_AS(wilcoxon_rank_sum(std::vector<double>{1}, b), Error);
}

TEST_CASE("rank-sum exact and normal routes agree at 6 + 6") {
  rnd::Engine rng(11);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    auto a = draw(rng, 6, rep % 3 == 0 ? -1.0 : 0.0);
    auto b = draw(rng, 6);
    for (auto alt : {Alternative::kLess, Alternative::kGreater}) {
      worst = std::max(worst, std::fabs(rank_sum_exact_p(a, b, alt) - rank_sum_normal_p(a, b, alt)));
    }
  }
  CHECK(worst < 0.02);
  // with ties
  const std::vector<double> a{1, 2, 2, 3, 5, 5}, b{2, 3, 4, 5, 6, 6};
  CHECK(std::fabs(rank_sum_exact_p(a, b, Alternative::kLess) - rank_sum_normal_p(a, b, Alternative::kLess)) < 0.02);
}

TEST_CASE("rank-sum under no effect") {
  rnd::Engine rng(3);
  std::size_t low = 0;
  for (int rep = 0; rep < 100; ++rep) {
    auto a = draw(rng, 20);
    auto r = wilcoxon_rank_sum(a, a);
    CHECK_FALSE(r.exact);
    CHECK(r.p > 0.05);
    low += wilcoxon_rank_sum(draw(rng, 15), draw(rng, 15)).p < 0.05;
  }
  CHECK(low < 15);
}

TEST_CASE("Benjamini-Hochberg") {
  CHECK(bh_fdr(std::vector<double>{0.03}) == std::vector<double>{0.03});
  auto adj = bh_fdr(std::vector<double>{0.01, 0.04});
  CHECK(adj[0] == doctest::Approx(0.02));
  CHECK(adj[1] == doctest::Approx(0.04));
  // step-up monotonicity: 0.04*3/2 = 0.06 is lowered to min over larger ranks
  adj = bh_fdr(std::vector<double>{0.04, 0.01, 0.045});
  CHECK(adj[0] == doctest::Approx(0.045));
  CHECK(adj[1] == doctest::Approx(0.03));
  CHECK(adj[2] == doctest::Approx(0.045));
  CHECK_THROWS_AS(bh_fdr(std::vector<double>{0.5, 1.5}), Error);

  rnd::Engine rng(5);
  std::vector<double> p(50);
  for (auto& x : p) x = std::pow(rnd::uniform01(rng), 3);
  adj = bh_fdr(p);
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return p[i] < p[j]; });
  for (std::size_t k = 0; k < p.size(); ++k) {
    CHECK(adj[k] >= p[k]);
    CHECK(adj[k] <= 1.0);
    if (k) CHECK(adj[order[k]] >= adj[order[k - 1]]);
  }
  // rejections at alpha equal the step-up set
  const double alpha = 0.1;
  std::size_t kmax = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[order[k]] <= alpha * static_cast<double>(k + 1) / static_cast<double>(p.size())) kmax = k + 1;
  }
  for (std::size_t k = 0; k < p.size(); ++k) CHECK((adj[order[k]] <= alpha) == (k < kmax));
}

TEST_CASE("Moran's I") {
  SpatialField f{{"a", "b", "c", "d"}, {1, -1, -1, 1}, row_standardize(rook_grid(2, 2))};
  CHECK(morans_i_statistic(f.values, f.adjacency) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(morans_i_statistic(f.values, rook_grid(2, 2)) == doctest::Approx(-1.0).epsilon(1e-15));

  SpatialField flat{{"a", "b", "c", "d"}, {2, 2, 2, 2}, rook_grid(2, 2)};
  CHECK_THROWS_AS(morans_i(flat, 10), Error);

  rnd::Engine rng(9);
  SpatialField g;
  g.adjacency = row_standardize(rook_grid(5, 6));
  for (std::size_t i = 0; i < 30; ++i) {
    g.ids.push_back(std::to_string(i));
    g.values.push_back(rnd::normal(rng));
  }
  auto r = morans_i(g, 1000, 4);
  CHECK(r.expected == doctest::Approx(-1.0 / 29.0));
  CHECK(std::fabs(r.perm_mean - r.expected) < 0.05);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value <= 1.0);
  CHECK(r.i >= -1.0);
  CHECK(r.i <= 1.0);

  // smooth gradient is strongly positive
  for (std::size_t i = 0; i < 30; ++i) g.values[i] = static_cast<double>(i / 6) + 0.1 * static_cast<double>(i % 6);
  r = morans_i(g, 999, 4);
  CHECK(r.i > 0.5);
  CHECK(r.p_value < 0.01);
}

TEST_CASE("knn adjacency is symmetric without self loops") {
  std::vector<std::pair<double, double>> xy;
  rnd::Engine rng(2);
  for (int i = 0; i < 25; ++i) xy.emplace_back(rnd::uniform01(rng), rnd::uniform01(rng));
  auto adj = knn_adjacency(xy, 6);
  for (std::size_t i = 0; i < adj.size(); ++i) {
    CHECK(adj[i].size() >= 6);
    for (auto [j, w] : adj[i]) {
      CHECK(j != i);
      CHECK(w > 0.0);
      CHECK(std::any_of(adj[j].begin(), adj[j].end(), [&](auto e) { return e.first == i; }));
    }
  }
  auto rs = row_standardize(adj);
  for (const auto& row : rs) {
    double s = 0;
    for (auto [j, w] : row) s += w;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("metric examples") {
  using namespace dispa::train;
  CHECK(metric_rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == doctest::Approx(3.5355339).epsilon(1e-7));
  const std::vector<double> x{0.5, 1.5, -2, 4};
  std::vector<double> y;
  for (double v : x) y.push_back(2 * v + 1);
  CHECK(metric_pcc(x, y) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(metric_scc(std::vector<double>{1, 2, 3, 4}, std::vector<double>{4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(metric_scc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(metric_pcc(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), Error);
  CHECK(metric_rmse(x, x) == 0.0);
  CHECK(metric_pcc(x, x) == doctest::Approx(1.0));
  CHECK(metric_scc(x, x) == doctest::Approx(1.0));
}

TEST_CASE("metrics match brute-force references") {
  using namespace dispa::train;
  rnd::Engine rng(21);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 3 + rnd::uniform_index(rng, 40);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      // coarse values force ties
      a[i] = std::round(rnd::normal(rng) * 3) / 3;
      b[i] = a[i] + rnd::normal(rng);
    }
    if (std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; })) a[0] += 1;
    double se = 0;
    for (std::size_t i = 0; i < n; ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    CHECK(std::fabs(metric_rmse(a, b) - std::sqrt(se / static_cast<double>(n))) < 1e-12);
    CHECK(std::fabs(metric_pcc(a, b) - brute_pcc(a, b)) < 1e-12);
    CHECK(std::fabs(metric_scc(a, b) - brute_pcc(brute_ranks(a), brute_ranks(b))) < 1e-12);
    const auto ra = average_ranks(a), rb = brute_ranks(a);
    for (std::size_t i = 0; i < n; ++i) CHECK(ra[i] == rb[i]);
  }
}
