#pragma once

#include <span>
#include <vector>

namespace dispa::train {

// 1-based ranks with ties replaced by their average rank.
std::vector<double> average_ranks(std::span<const double> x);

double metric_rmse(std::span<const double> pred, std::span<const double> obs);
// Pearson correlation; throws when either vector is constant.
double metric_pcc(std::span<const double> pred, std::span<const double> obs);
// Spearman correlation: Pearson over average ranks.
double metric_scc(std::span<const double> pred, std::span<const double> obs);

}  // namespace dispa::train
