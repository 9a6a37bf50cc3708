#include <fstream>
#include <map>
#include <optional>
#include <set>

#include <spdlog/spdlog.h>

#include "common.hpp"
#include "dispa/analysis/interpret.hpp"
#include "dispa/analysis/stats.hpp"
#include "dispa/util/csv.hpp"
#include "dispa/util/error.hpp"

namespace dispa::cli {
namespace {

struct CompareOptions {
  fs::path predictions;
  fs::path labels;
  fs::path coords;
  fs::path adjacency;
  fs::path out;
  double alpha = 0.05;
  bool pairwise = false;
  std::size_t knn = 6;
  std::size_t permutations = 999;
};

std::ofstream create(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

// CSV unit_id, neighbor_id[, weight]; symmetrised.
analysis::Adjacency load_adjacency(const fs::path& path, const std::vector<std::string>& units) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < units.size(); ++i) index[units[i]] = i;
  const auto t = csv::read(path);
  const auto ca = t.column("unit_id"), cb = t.column("neighbor_id");
  std::optional<std::size_t> cw;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (t.header[i] == "weight") cw = i;
  }
  std::vector<std::map<std::size_t, double>> w(units.size());
  for (const auto& row : t.rows) {
    const auto where = t.source + ":" + std::to_string(row.line);
    auto a = index.find(row.fields.at(ca)), b = index.find(row.fields.at(cb));
    if (a == index.end() || b == index.end()) continue;
    if (a->second == b->second) throw DataError(where + ": self neighbour");
    const double v = cw ? csv::parse_double(row.fields.at(*cw), where) : 1.0;
    if (v < 0) throw DataError(where + ": negative weight");
    w[a->second][b->second] = v;
    w[b->second][a->second] = v;
  }
  analysis::Adjacency adj(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    for (auto [j, v] : w[i]) adj[i].emplace_back(j, v);
  }
  return adj;
}

void run_compare(const CompareOptions& o, const Context& ctx) {
  begin(ctx, "compare-groups");
  const auto preds = analysis::load_unit_predictions(o.predictions);
  const auto groups = analysis::load_groups(o.labels);
  const auto results = analysis::group_selective_drugs(
      preds, groups, o.alpha, o.pairwise ? analysis::GroupContrast::kPairwise : analysis::GroupContrast::kPooledRest);
  fs::create_directories(o.out);
  {
    auto f = create(o.out / "comparisons.csv");
    analysis::write_group_comparisons(f, results);
  }
  std::map<std::string, std::vector<const analysis::GroupComparison*>> by_group;
  for (const auto& r : results) by_group[r.group_a].push_back(&r);
  for (const auto& [g, rs] : by_group) {
    auto f = create(o.out / ("selective_" + g + ".csv"));
    csv::write_row(f, {"drug_id", "versus", "delta", "p_raw", "p_adjusted"});
    std::size_t n = 0;
    for (const auto* r : rs) {
      if (!r->selective) continue;
      csv::write_row(f, {r->drug_id, r->group_b, csv::format_double(r->delta), csv::format_double(r->p_raw),
                         csv::format_double(r->p_adjusted)});
      ++n;
    }
    spdlog::info("group {}: {} selective drugs at alpha {}", g, n, o.alpha);
  }
  {
    auto f = create(o.out / "overlap.csv");
    csv::write_row(f, {"groups", "n_drugs"});
    for (const auto& [gs, n] : analysis::selective_overlap(results)) {
      std::string key;
      for (const auto& g : gs) key += (key.empty() ? "" : "&") + g;
      csv::write_row(f, {key, std::to_string(n)});
    }
  }

  if (!o.coords.empty() || !o.adjacency.empty()) {
    // per-drug Moran's I of predictions over spots
    std::map<std::string, std::map<std::string, double>> by_drug;
    for (const auto& p : preds) by_drug[p.drug_id][p.unit_id] = p.value;
    std::vector<std::string> units;
    std::vector<std::pair<double, double>> xy;
    if (!o.coords.empty()) {
      for (const auto& [u, c] : analysis::load_coordinates(o.coords)) {
        units.push_back(u);
        xy.push_back(c);
      }
    } else {
      std::set<std::string> seen;
      for (const auto& p : preds) seen.insert(p.unit_id);
      units.assign(seen.begin(), seen.end());
    }
    const auto adj = analysis::row_standardize(o.adjacency.empty() ? analysis::knn_adjacency(xy, o.knn)
                                                                    : load_adjacency(o.adjacency, units));
    auto f = create(o.out / "moran.csv");
    csv::write_row(f, {"drug_id", "n_spots", "morans_i", "expected", "p_value", "n_perm", "status"});
    for (const auto& [drug, values] : by_drug) {
      analysis::SpatialField field;
      field.ids = units;
      field.adjacency = adj;
      bool complete = true;
      for (const auto& u : units) {
        auto it = values.find(u);
        if (it == values.end()) {
          complete = false;
          break;
        }
        field.values.push_back(it->second);
      }
      if (!complete) {
        csv::write_row(f, {drug, std::to_string(units.size()), "", "", "", "0", "missing predictions for some spots"});
        continue;
      }
      try {
        const auto m = analysis::morans_i(field, o.permutations, ctx.globals.seed);
        csv::write_row(f, {drug, std::to_string(units.size()), csv::format_double(m.i), csv::format_double(m.expected),
                           csv::format_double(m.p_value), std::to_string(m.n_perm), "ok"});
      } catch (const Error& e) {
        csv::write_row(f, {drug, std::to_string(units.size()), "", "", "", "0", e.what()});
      }
    }
  }
  std::vector<ManifestInput> inputs{{"predictions", o.predictions}, {"labels", o.labels}};
  if (!o.coords.empty()) inputs.push_back({"coordinates", o.coords});
  if (!o.adjacency.empty()) inputs.push_back({"adjacency", o.adjacency});
  write_manifest(o.out, ctx, "compare-groups", inputs, {ctx.globals.seed});
}

}  // namespace

void add_analysis_commands(CLI::App& app, Context& ctx) {
  auto co = std::make_shared<CompareOptions>();
  auto* c = app.add_subcommand("compare-groups", "Group-selective drugs and spatial coherence of predictions");
  c->add_option("--predictions", co->predictions, "CSV unit_id, drug_id, ln_ic50_pred")->required()->check(CLI::ExistingFile);
  c->add_option("--labels", co->labels, "CSV unit_id, group")->required()->check(CLI::ExistingFile);
  c->add_option("--coords", co->coords, "CSV unit_id, x, y for Moran's I")->check(CLI::ExistingFile);
  c->add_option("--adjacency", co->adjacency, "CSV unit_id, neighbor_id[, weight]; overrides k-NN")->check(CLI::ExistingFile);
  c->add_option("--out", co->out, "Output directory")->required();
  c->add_option("--alpha", co->alpha, "FDR level")->capture_default_str();
  c->add_flag("--pairwise", co->pairwise, "Compare each group against each other group instead of the pooled rest");
  c->add_option("--knn", co->knn, "Neighbours per spot")->capture_default_str();
  c->add_option("--permutations", co->permutations, "Moran permutation count")->capture_default_str();
  c->callback([co, &ctx] { run_compare(*co, ctx); });
}

}  // namespace dispa::cli
