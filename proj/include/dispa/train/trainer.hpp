#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dispa/ad/matrix.hpp"
#include "dispa/model/dispa_model.hpp"
#include "dispa/train/split.hpp"

namespace dispa::train {

// Model-ready inputs: one pathway tensor per cell, embeddings per drug.
struct Dataset {
  struct Pair {
    std::size_t cell = 0;
    std::size_t drug = 0;
    double y = 0.0;
  };

  std::vector<std::string> cell_ids;
  std::vector<ad::Matrix> path;  // N_p x N_g per cell
  std::vector<std::string> drug_ids;
  std::vector<ad::Matrix> drug;  // 1 x d_e per drug
  std::vector<ad::Matrix> sub;   // N_s x d_e per drug
  std::vector<Pair> pairs;

  std::size_t n_p() const { return path.empty() ? 0 : path.front().rows(); }
  std::size_t n_g() const { return path.empty() ? 0 : path.front().cols(); }
  std::size_t d_e() const { return drug.empty() ? 0 : drug.front().cols(); }

  // Throws unless all shapes agree and every pair resolves.
  void validate() const;
  // Response table view of `pairs`, for splitting.
  data::ResponseTable responses() const;
};

// Seed offsets: the split uses `seed`, initialisation seed + 1, batch order seed + 2.
inline constexpr std::uint64_t kInitSeedOffset = 1;
inline constexpr std::uint64_t kShuffleSeedOffset = 2;

struct RunConfig {
  double learning_rate = 3e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 200;
  std::size_t patience = 20;  // epochs without validation improvement before stopping
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  model::ModelConfig model;  // n_p, n_g, d_e are filled from the dataset

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean squared error over the epoch's batches, before each update
  double val_rmse = 0.0;
};

struct TrainResult {
  model::ModelParams best;
  std::size_t best_epoch = 0;
  double best_val_rmse = 0.0;
  double initial_train_loss = 0.0;
  std::vector<EpochLog> history;
  bool stopped_early = false;
};

// Pairs handled by one tape; gradients are reduced in chunk order, so the
// result does not depend on the thread count.
inline constexpr std::size_t kChunkPairs = 16;

// Called after every epoch; return false to stop.
using EpochCallback = std::function<bool(const EpochLog&)>;

TrainResult train(const Dataset& data, const Split& split, const RunConfig& config, const EpochCallback& on_epoch = {});

// Predictions for the given pair indices, in order.
std::vector<double> predict_pairs(const model::ModelParams& params, const Dataset& data,
                                  const std::vector<std::size_t>& pairs, std::size_t threads = 1);

struct GroupMetric {
  std::string id;
  std::size_t n = 0;
  std::optional<double> pcc;  // empty when fewer than 2 pairs or a constant vector
};

struct MetricsReport {
  std::size_t n = 0;
  double rmse = 0.0;
  double pcc = 0.0;
  double scc = 0.0;
  std::vector<GroupMetric> per_drug;
  std::vector<GroupMetric> per_cell;
};

MetricsReport evaluate(const model::ModelParams& params, const Dataset& data, const std::vector<std::size_t>& pairs,
                       std::size_t threads = 1);
// Metrics from precomputed predictions aligned with `pairs`.
MetricsReport score(const Dataset& data, const std::vector<std::size_t>& pairs, const std::vector<double>& pred);

struct MeanStd {
  double mean = 0.0;
  std::optional<double> std;  // sample std; needs at least 2 runs
};

MeanStd mean_std(const std::vector<double>& v);

}  // namespace dispa::train
