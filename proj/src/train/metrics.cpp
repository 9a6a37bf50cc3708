#include "dispa/train/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dispa/util/error.hpp"

namespace dispa::train {
namespace {

void check(std::span<const double> pred, std::span<const double> obs) {
  if (pred.size() != obs.size()) throw ShapeError("metric: prediction and observation lengths differ");
  if (pred.size() < 2) throw Error("metric: need at least two values");
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double metric_rmse(std::span<const double> pred, std::span<const double> obs) {
  check(pred, obs);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - obs[i]) * (pred[i] - obs[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double metric_pcc(std::span<const double> pred, std::span<const double> obs) {
  check(pred, obs);
  const double n = static_cast<double>(pred.size());
  const double mx = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  const double my = std::accumulate(obs.begin(), obs.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dx = pred[i] - mx, dy = obs[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) throw Error("correlation undefined for a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double metric_scc(std::span<const double> pred, std::span<const double> obs) {
  check(pred, obs);
  const auto rp = average_ranks(pred);
  const auto ro = average_ranks(obs);
  return metric_pcc(rp, ro);
}

}  // namespace dispa::train
