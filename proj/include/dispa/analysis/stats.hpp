#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dispa/chem/brics.hpp"

namespace dispa::analysis {

// |a ∩ b| / |a ∪ b| over sorted unique feature sets. Throws if both are empty.
double tanimoto(const chem::FeatureSet& a, const chem::FeatureSet& b);

enum class Alternative {
  kLess,     // a tends to be smaller than b
  kGreater,  // a tends to be larger than b
};

struct RankSumResult {
  double u = 0.0;  // Mann-Whitney U of sample a (average ranks for ties)
  double p = 1.0;
  bool exact = false;
};

// Largest pooled size for which the exact permutation distribution is used.
inline constexpr std::size_t kExactRankSumLimit = 12;

// One-sided Wilcoxon rank-sum test. Exact enumeration when |a|+|b| <= limit,
// otherwise normal approximation with tie-corrected variance and continuity
// correction. Requires |a|, |b| >= 2.
RankSumResult wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b,
                                Alternative alt = Alternative::kLess, std::size_t exact_limit = kExactRankSumLimit);

// The two p-value routes, exposed for cross-checking.
double rank_sum_exact_p(std::span<const double> a, std::span<const double> b, Alternative alt);
double rank_sum_normal_p(std::span<const double> a, std::span<const double> b, Alternative alt);

// Benjamini-Hochberg step-up adjusted p-values, in input order.
std::vector<double> bh_fdr(std::span<const double> p);

// Neighbour lists with weights; row i holds (j, w_ij).
using Adjacency = std::vector<std::vector<std::pair<std::size_t, double>>>;

struct SpatialField {
  std::vector<std::string> ids;
  std::vector<double> values;
  Adjacency adjacency;
};

// Symmetrised k-nearest-neighbour graph with unit weights.
Adjacency knn_adjacency(std::span<const std::pair<double, double>> coords, std::size_t k);
// Rook (4-neighbour) adjacency on a rows x cols grid, row-major spot order.
Adjacency rook_grid(std::size_t rows, std::size_t cols);
// Divides each row by its weight sum.
Adjacency row_standardize(Adjacency adj);

struct MoranResult {
  double i = 0.0;
  double expected = 0.0;    // -1/(n-1)
  double p_value = 1.0;     // one-sided (greater) permutation p; 1 when n_perm == 0
  double perm_mean = 0.0;   // mean I over permutations
  std::size_t n_perm = 0;
};

double morans_i_statistic(std::span<const double> values, const Adjacency& adj);
MoranResult morans_i(const SpatialField& field, std::size_t n_perm = 999, std::uint64_t seed = 0);

}  // namespace dispa::analysis
