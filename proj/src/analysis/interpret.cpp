#include "dispa/analysis/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include <json.hpp>

#include "dispa/analysis/stats.hpp"
#include "dispa/train/metrics.hpp"
#include "dispa/util/csv.hpp"
#include "dispa/util/error.hpp"

namespace dispa::analysis {
namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double cosine_cols(const ad::Matrix& m, std::size_t a, std::size_t b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    ab += m(r, a) * m(r, b);
    aa += m(r, a) * m(r, a);
    bb += m(r, b) * m(r, b);
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

bool constant(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

std::string label(const std::vector<std::string>& ids, std::size_t i) {
  return i < ids.size() ? ids[i] : std::to_string(i);
}

}  // namespace

std::vector<model::AttentionRecord> export_attention(const model::ModelParams& params, const train::Dataset& data,
                                                     const std::vector<std::size_t>& pairs) {
  std::vector<model::AttentionRecord> out;
  out.reserve(pairs.size());
  for (auto i : pairs) {
    if (i >= data.pairs.size()) throw Error("export_attention: pair index " + std::to_string(i) + " out of range");
    const auto& p = data.pairs[i];
    model::AttentionRecord rec;
    model::predict(params, data.path[p.cell], data.drug[p.drug], data.sub[p.drug], &rec);
    rec.cell_id = data.cell_ids[p.cell];
    rec.drug_id = data.drug_ids[p.drug];
    out.push_back(std::move(rec));
  }
  return out;
}

void write_attention_csv(std::ostream& out, const std::vector<model::AttentionRecord>& records,
                         const std::vector<std::string>& pathway_ids) {
  csv::write_row(out, {"cell_id", "drug_id", "view", "query", "key", "softmax1", "softmax2", "net", "lambda"});
  for (const auto& r : records) {
    const auto emit = [&](const char* view, const model::AttentionComponents& c, bool keys_are_pathways) {
      for (std::size_t q = 0; q < c.net.rows(); ++q) {
        for (std::size_t k = 0; k < c.net.cols(); ++k) {
          csv::write_row(out, {r.cell_id, r.drug_id, view, keys_are_pathways ? r.drug_id : label(pathway_ids, q),
                               keys_are_pathways ? label(pathway_ids, k) : std::to_string(k),
                               csv::format_double(c.softmax1(q, k)), csv::format_double(c.softmax2(q, k)),
                               csv::format_double(c.net(q, k)), csv::format_double(c.lambda)});
        }
      }
    };
    emit("path2sub", r.path2sub, false);
    emit("drug2path", r.drug2path, true);
  }
}

void write_attention_json(std::ostream& out, const std::vector<model::AttentionRecord>& records,
                          const std::vector<std::string>& pathway_ids) {
  const auto rows = [](const ad::Matrix& m) {
    std::vector<std::vector<double>> v;
    for (std::size_t r = 0; r < m.rows(); ++r) v.emplace_back(m.row(r).begin(), m.row(r).end());
    return v;
  };
  const auto comp = [&](const model::AttentionComponents& c) {
    nlohmann::ordered_json j;
    j["lambda"] = c.lambda;
    j["softmax1"] = rows(c.softmax1);
    j["softmax2"] = rows(c.softmax2);
    j["net"] = rows(c.net);
    return j;
  };
  nlohmann::ordered_json all = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["cell_id"] = r.cell_id;
    j["drug_id"] = r.drug_id;
    j["pathways"] = pathway_ids;
    j["path2sub"] = comp(r.path2sub);
    j["drug2path"] = comp(r.drug2path);
    all.push_back(std::move(j));
  }
  out << all.dump(1) << '\n';
}

ad::Matrix mean_path2sub(const std::vector<const model::AttentionRecord*>& records) {
  if (records.empty()) throw Error("mean_path2sub: no records");
  const auto& first = records.front()->path2sub.net;
  ad::Matrix sum(first.rows(), first.cols());
  for (const auto* r : records) {
    const auto& m = r->path2sub.net;
    if (m.rows() != sum.rows() || m.cols() != sum.cols()) throw ShapeError("mean_path2sub: records differ in shape");
    for (std::size_t i = 0; i < m.data().size(); ++i) sum.data()[i] += m.data()[i];
  }
  for (auto& v : sum.data()) v /= static_cast<double>(records.size());
  return sum;
}

AlignmentScore substructure_alignment(const std::string& drug_id, const std::vector<chem::FeatureSet>& fingerprints,
                                      const ad::Matrix& net) {
  const std::size_t n_s = net.cols();
  if (fingerprints.size() != n_s) throw ShapeError("alignment: " + drug_id + " has " + std::to_string(fingerprints.size()) + " fingerprints for " + std::to_string(n_s) + " fragments");
  if (n_s < 3) throw Error("alignment: " + drug_id + " has fewer than 3 fragments");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < n_s; ++i) {
    for (std::size_t j = i + 1; j < n_s; ++j) {
      x.push_back(tanimoto(fingerprints[i], fingerprints[j]));
      y.push_back(cosine_cols(net, i, j));
    }
  }
  if (constant(x) || constant(y)) throw Error("alignment: " + drug_id + " has a constant similarity vector");
  return {drug_id, train::metric_scc(x, y), x.size()};
}

std::vector<UnitPrediction> load_unit_predictions(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto cu = t.column("unit_id"), cd = t.column("drug_id"), cv = t.column("ln_ic50_pred");
  std::vector<UnitPrediction> out;
  for (const auto& row : t.rows) {
    const std::string where = t.source + ":" + std::to_string(row.line);
    if (row.fields.size() != t.header.size()) throw DataError(where + ": expected " + std::to_string(t.header.size()) + " fields");
    out.push_back({row.fields[cu], row.fields[cd], csv::parse_double(row.fields[cv], where)});
  }
  return out;
}

std::map<std::string, std::string> load_groups(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto cu = t.column("unit_id"), cg = t.column("group");
  std::map<std::string, std::string> out;
  for (const auto& row : t.rows) {
    const std::string where = t.source + ":" + std::to_string(row.line);
    if (row.fields.size() != t.header.size()) throw DataError(where + ": expected " + std::to_string(t.header.size()) + " fields");
    if (!out.emplace(row.fields[cu], row.fields[cg]).second) throw DataError(where + ": duplicate unit '" + row.fields[cu] + "'");
  }
  return out;
}

std::map<std::string, std::pair<double, double>> load_coordinates(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto cu = t.column("unit_id"), cx = t.column("x"), cy = t.column("y");
  std::map<std::string, std::pair<double, double>> out;
  for (const auto& row : t.rows) {
    const std::string where = t.source + ":" + std::to_string(row.line);
    if (row.fields.size() != t.header.size()) throw DataError(where + ": expected " + std::to_string(t.header.size()) + " fields");
    const std::pair<double, double> xy{csv::parse_double(row.fields[cx], where), csv::parse_double(row.fields[cy], where)};
    if (!out.emplace(row.fields[cu], xy).second) throw DataError(where + ": duplicate unit '" + row.fields[cu] + "'");
  }
  return out;
}

std::vector<GroupComparison> group_selective_drugs(const std::vector<UnitPrediction>& predictions,
                                                   const std::map<std::string, std::string>& groups, double alpha,
                                                   GroupContrast contrast) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("group comparison: alpha must lie in (0, 1)");
  // drug -> group -> values, in sorted order for stable output
  std::map<std::string, std::map<std::string, std::vector<double>>> by_drug;
  std::map<std::string, std::set<std::string>> units;
  for (const auto& p : predictions) {
    auto it = groups.find(p.unit_id);
    if (it == groups.end()) continue;
    by_drug[p.drug_id][it->second].push_back(p.value);
    units[it->second].insert(p.unit_id);
  }
  if (units.size() < 2) throw Error("group comparison: need at least 2 labelled groups with predictions");
  for (const auto& [g, u] : units) {
    if (u.size() < 2) throw Error("group comparison: group '" + g + "' has fewer than 2 units");
  }

  std::vector<GroupComparison> out;
  const auto run_family = [&](const std::string& a, const std::string& b) {
    std::vector<GroupComparison> fam;
    for (const auto& [drug, per_group] : by_drug) {
      std::vector<double> va, vb;
      for (const auto& [g, v] : per_group) {
        if (g == a) va.insert(va.end(), v.begin(), v.end());
        else if (b == "rest" || g == b) vb.insert(vb.end(), v.begin(), v.end());
      }
      if (va.size() < 2 || vb.size() < 2) continue;
      GroupComparison c;
      c.drug_id = drug;
      c.group_a = a;
      c.group_b = b;
      c.n_a = va.size();
      c.n_b = vb.size();
      c.delta = median(va) - median(vb);
      c.p_raw = wilcoxon_rank_sum(va, vb, Alternative::kLess).p;
      fam.push_back(c);
    }
    std::vector<double> p;
    for (const auto& c : fam) p.push_back(c.p_raw);
    const auto adj = bh_fdr(p);
    for (std::size_t i = 0; i < fam.size(); ++i) {
      fam[i].p_adjusted = adj[i];
      fam[i].selective = adj[i] < alpha;
    }
    out.insert(out.end(), fam.begin(), fam.end());
  };
  for (const auto& [a, ua] : units) {
    if (contrast == GroupContrast::kPooledRest) {
      run_family(a, "rest");
    } else {
      for (const auto& [b, ub] : units) {
        if (a != b) run_family(a, b);
      }
    }
  }
  return out;
}

std::map<std::vector<std::string>, std::size_t> selective_overlap(const std::vector<GroupComparison>& results) {
  std::map<std::string, std::set<std::string>> per_drug;
  for (const auto& r : results) {
    if (r.selective) per_drug[r.drug_id].insert(r.group_a);
  }
  std::map<std::vector<std::string>, std::size_t> out;
  for (const auto& [drug, gs] : per_drug) ++out[std::vector<std::string>(gs.begin(), gs.end())];
  return out;
}

void write_group_comparisons(std::ostream& out, const std::vector<GroupComparison>& results) {
  csv::write_row(out, {"group", "versus", "drug_id", "n_group", "n_versus", "delta", "p_raw", "p_adjusted", "selective"});
  for (const auto& r : results) {
    csv::write_row(out, {r.group_a, r.group_b, r.drug_id, std::to_string(r.n_a), std::to_string(r.n_b),
                         csv::format_double(r.delta), csv::format_double(r.p_raw), csv::format_double(r.p_adjusted),
                         r.selective ? "1" : "0"});
  }
}

}  // namespace dispa::analysis
