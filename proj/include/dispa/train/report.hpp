#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dispa/train/split.hpp"
#include "dispa/train/trainer.hpp"

namespace dispa::train {

nlohmann::ordered_json to_json(const RunConfig& config);
nlohmann::ordered_json to_json(const SplitSpec& spec);
nlohmann::ordered_json to_json(const MetricsReport& m, bool breakdowns = true);

struct RunReport {
  std::string name;
  SplitSpec split;
  std::size_t n_train = 0, n_val = 0, n_test = 0, n_dropped = 0;
  RunConfig config;
  std::size_t best_epoch = 0;
  double best_val_rmse = 0.0;
  double initial_train_loss = 0.0;
  bool stopped_early = false;
  std::vector<EpochLog> history;
  MetricsReport test;
  std::string bundle_digest;  // identifies the data the run used
};

RunReport make_report(std::string name, const SplitSpec& spec, const Split& split, const RunConfig& config,
                      const TrainResult& result, const MetricsReport& test);

// No timing or host information: identical runs give identical text.
nlohmann::ordered_json to_json(const RunReport& r);

// One row per split mode: split, n_runs, then mean and sample std of rmse, pcc, scc.
void write_aggregate_csv(std::ostream& out, const std::vector<RunReport>& reports);

}  // namespace dispa::train
