#include "dispa/train/report.hpp"

#include <map>
#include <ostream>

#include "dispa/util/csv.hpp"

namespace dispa::train {

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["model"] = c.model.canonical();
  j["model_hash"] = c.model.hash();
  return j;
}

nlohmann::ordered_json to_json(const SplitSpec& s) {
  nlohmann::ordered_json j;
  j["mode"] = to_string(s.mode);
  j["ratios"] = s.ratios;
  j["seed"] = s.seed;
  j["fixed_test"] = s.fixed_test;
  if (s.fixed_test) j["test_seed"] = s.test_seed;
  if (!s.test_cells.empty()) j["test_cells"] = s.test_cells;
  if (!s.test_drugs.empty()) j["test_drugs"] = s.test_drugs;
  return j;
}

nlohmann::ordered_json to_json(const MetricsReport& m, bool breakdowns) {
  nlohmann::ordered_json j;
  j["n"] = m.n;
  j["rmse"] = m.rmse;
  j["pcc"] = m.pcc;
  j["scc"] = m.scc;
  if (breakdowns) {
    const auto groups = [](const std::vector<GroupMetric>& v) {
      nlohmann::ordered_json a = nlohmann::ordered_json::array();
      for (const auto& g : v) {
        nlohmann::ordered_json e;
        e["id"] = g.id;
        e["n"] = g.n;
        e["pcc"] = g.pcc ? nlohmann::ordered_json(*g.pcc) : nlohmann::ordered_json(nullptr);
        a.push_back(std::move(e));
      }
      return a;
    };
    j["per_drug"] = groups(m.per_drug);
    j["per_cell"] = groups(m.per_cell);
  }
  return j;
}

RunReport make_report(std::string name, const SplitSpec& spec, const Split& split, const RunConfig& config,
                      const TrainResult& result, const MetricsReport& test) {
  RunReport r;
  r.name = std::move(name);
  r.split = spec;
  r.n_train = split.train.size();
  r.n_val = split.val.size();
  r.n_test = split.test.size();
  r.n_dropped = split.dropped;
  r.config = config;
  r.config.model = result.best.config;
  r.best_epoch = result.best_epoch;
  r.best_val_rmse = result.best_val_rmse;
  r.initial_train_loss = result.initial_train_loss;
  r.stopped_early = result.stopped_early;
  r.history = result.history;
  r.test = test;
  return r;
}

nlohmann::ordered_json to_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["name"] = r.name;
  j["split"] = to_json(r.split);
  j["sizes"] = {{"train", r.n_train}, {"val", r.n_val}, {"test", r.n_test}, {"dropped", r.n_dropped}};
  j["config"] = to_json(r.config);
  if (!r.bundle_digest.empty()) j["bundle_digest"] = r.bundle_digest;
  j["best_epoch"] = r.best_epoch;
  j["best_val_rmse"] = r.best_val_rmse;
  j["initial_train_loss"] = r.initial_train_loss;
  j["stopped_early"] = r.stopped_early;
  nlohmann::ordered_json h = nlohmann::ordered_json::array();
  for (const auto& e : r.history) h.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_rmse", e.val_rmse}});
  j["history"] = std::move(h);
  j["test"] = to_json(r.test);
  return j;
}

void write_aggregate_csv(std::ostream& out, const std::vector<RunReport>& reports) {
  std::map<std::string, std::vector<const RunReport*>> by_mode;
  std::vector<std::string> order;
  for (const auto& r : reports) {
    const auto mode = to_string(r.split.mode);
    if (by_mode.find(mode) == by_mode.end()) order.push_back(mode);
    by_mode[mode].push_back(&r);
  }
  csv::write_row(out, {"split", "n_runs", "rmse_mean", "rmse_std", "pcc_mean", "pcc_std", "scc_mean", "scc_std"});
  for (const auto& mode : order) {
    const auto& runs = by_mode[mode];
    std::vector<std::string> row{mode, std::to_string(runs.size())};
    for (auto field : {&MetricsReport::rmse, &MetricsReport::pcc, &MetricsReport::scc}) {
      std::vector<double> v;
      for (const auto* r : runs) v.push_back(r->test.*field);
      const auto ms = mean_std(v);
      row.push_back(csv::format_double(ms.mean));
      row.push_back(ms.std ? csv::format_double(*ms.std) : "");
    }
    csv::write_row(out, row);
  }
}

}  // namespace dispa::train
