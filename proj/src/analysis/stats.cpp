#include "dispa/analysis/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dispa/train/metrics.hpp"
#include "dispa/util/error.hpp"

namespace dispa::analysis {
namespace {

void check_samples(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error("rank-sum test: empty sample");
  if (a.size() < 2 || b.size() < 2) throw Error("rank-sum test: each sample needs at least 2 values");
}

std::vector<double> pooled(std::span<const double> a, std::span<const double> b) {
  std::vector<double> all(a.begin(), a.end());
  all.insert(all.end(), b.begin(), b.end());
  return all;
}

double u_from_ranks(const std::vector<double>& ranks, std::size_t na) {
  const double ra = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(na), 0.0);
  return ra - static_cast<double>(na) * static_cast<double>(na + 1) / 2.0;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

double tanimoto(const chem::FeatureSet& a, const chem::FeatureSet& b) {
  if (a.empty() && b.empty()) throw Error("tanimoto: both feature sets are empty");
  std::size_t common = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++common;
      ++ia;
      ++ib;
    }
  }
  return static_cast<double>(common) / static_cast<double>(a.size() + b.size() - common);
}

double rank_sum_exact_p(std::span<const double> a, std::span<const double> b, Alternative alt) {
  check_samples(a, b);
  const auto all = pooled(a, b);
  const auto ranks = train::average_ranks(all);
  const std::size_t n = all.size(), na = a.size();
  if (n > 30) throw Error("rank-sum exact p: pooled sample too large to enumerate");
  const double observed = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(na), 0.0);
  // Enumerate every size-na subset of pooled positions as sample a.
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(na), true);
  std::size_t total = 0, extreme = 0;
  const double tol = 1e-9;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (pick[i]) s += ranks[i];
    }
    ++total;
    if (alt == Alternative::kLess ? s <= observed + tol : s >= observed - tol) ++extreme;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

double rank_sum_normal_p(std::span<const double> a, std::span<const double> b, Alternative alt) {
  check_samples(a, b);
  const auto all = pooled(a, b);
  const auto ranks = train::average_ranks(all);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double n = na + nb;
  const double u = u_from_ranks(ranks, a.size());
  const double mean = na * nb / 2.0;

  // tie correction: sum over tie groups of t^3 - t
  std::vector<double> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  double ties = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    ties += t * t * t - t;
    i = j;
  }
  const double var = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
  if (var <= 0.0) return 1.0;  // every value tied
  const double sd = std::sqrt(var);
  if (alt == Alternative::kLess) return normal_cdf((u - mean + 0.5) / sd);
  return 1.0 - normal_cdf((u - mean - 0.5) / sd);
}

RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b, Alternative alt,
                                std::size_t exact_limit) {
  check_samples(a, b);
  RankSumResult r;
  r.u = u_from_ranks(train::average_ranks(pooled(a, b)), a.size());
  r.exact = a.size() + b.size() <= exact_limit;
  r.p = r.exact ? rank_sum_exact_p(a, b, alt) : rank_sum_normal_p(a, b, alt);
  r.p = std::clamp(r.p, 0.0, 1.0);
  return r;
}

std::vector<double> bh_fdr(std::span<const double> p) {
  const std::size_t m = p.size();
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error("bh_fdr: p-value outside [0, 1]");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return p[x] < p[y]; });
  std::vector<double> out(m);
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const auto idx = order[r];
    running = std::min(running, p[idx] * static_cast<double>(m) / static_cast<double>(r + 1));
    out[idx] = std::clamp(running, p[idx], 1.0);
  }
  return out;
}

Adjacency knn_adjacency(std::span<const std::pair<double, double>> coords, std::size_t k) {
  const std::size_t n = coords.size();
  if (n < 2) throw Error("knn adjacency: need at least two spots");
  k = std::min(k, n - 1);
  std::vector<std::vector<bool>> linked(n, std::vector<bool>(n, false));
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t i = 0; i < n; ++i) {
    d.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = coords[i].first - coords[j].first, dy = coords[i].second - coords[j].second;
      d.emplace_back(dx * dx + dy * dy, j);
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    for (std::size_t t = 0; t < k; ++t) {
      linked[i][d[t].second] = true;
      linked[d[t].second][i] = true;
    }
  }
  Adjacency adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (linked[i][j]) adj[i].emplace_back(j, 1.0);
    }
  }
  return adj;
}

Adjacency rook_grid(std::size_t rows, std::size_t cols) {
  Adjacency adj(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto i = r * cols + c;
      if (r > 0) adj[i].emplace_back(i - cols, 1.0);
      if (c > 0) adj[i].emplace_back(i - 1, 1.0);
      if (c + 1 < cols) adj[i].emplace_back(i + 1, 1.0);
      if (r + 1 < rows) adj[i].emplace_back(i + cols, 1.0);
    }
  }
  return adj;
}

Adjacency row_standardize(Adjacency adj) {
  for (auto& row : adj) {
    double s = 0.0;
    for (auto& [j, w] : row) s += w;
    if (s > 0.0) {
      for (auto& [j, w] : row) w /= s;
    }
  }
  return adj;
}

double morans_i_statistic(std::span<const double> x, const Adjacency& adj) {
  const std::size_t n = x.size();
  if (adj.size() != n) throw ShapeError("morans_i: adjacency size differs from value count");
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double denom = 0.0;
  for (double v : x) denom += (v - mean) * (v - mean);
  if (denom <= 0.0) throw Error("morans_i: values have zero variance");
  double wsum = 0.0, num = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto [j, w] : adj[i]) {
      if (j == i) throw Error("morans_i: adjacency has a self loop");
      if (w < 0.0) throw Error("morans_i: negative weight");
      wsum += w;
      num += w * (x[i] - mean) * (x[j] - mean);
    }
  }
  if (wsum <= 0.0) throw Error("morans_i: adjacency has no nonzero weight");
  return static_cast<double>(n) / wsum * num / denom;
}

MoranResult morans_i(const SpatialField& field, std::size_t n_perm, std::uint64_t seed) {
  if (field.values.size() < 2) throw Error("morans_i: need at least two spots");
  MoranResult r;
  r.i = morans_i_statistic(field.values, field.adjacency);
  r.expected = -1.0 / static_cast<double>(field.values.size() - 1);
  r.n_perm = n_perm;
  if (n_perm == 0) return r;
  std::mt19937_64 rng(seed);
  std::vector<double> shuffled = field.values;
  std::size_t at_least = 0;
  double total = 0.0;
  for (std::size_t k = 0; k < n_perm; ++k) {
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const double ip = morans_i_statistic(shuffled, field.adjacency);
    total += ip;
    if (ip >= r.i - 1e-12) ++at_least;
  }
  r.perm_mean = total / static_cast<double>(n_perm);
  r.p_value = static_cast<double>(at_least + 1) / static_cast<double>(n_perm + 1);
  return r;
}

}  // namespace dispa::analysis
