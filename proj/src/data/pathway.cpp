#include "dispa/data/pathway.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "dispa/util/csv.hpp"
#include "dispa/util/error.hpp"

namespace dispa::data {
namespace {

std::string loc(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line); }

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::optional<std::size_t> find_index(const std::vector<std::string>& ids, const std::string& id) {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ids.begin());
}

}  // namespace

std::optional<std::size_t> ExpressionMatrix::cell_index(const std::string& id) const { return find_index(cell_ids, id); }
std::optional<std::size_t> ExpressionMatrix::gene_index(const std::string& id) const { return find_index(gene_ids, id); }

ExpressionMatrix parse_expression(std::istream& in, const std::string& source) {
  const auto t = csv::parse(in, source);
  if (t.header.size() < 2) throw DataError(source + ": expression file needs a cell id column and at least one gene");
  ExpressionMatrix m;
  std::unordered_set<std::string> seen;
  for (std::size_t j = 1; j < t.header.size(); ++j) {
    if (!seen.insert(t.header[j]).second) throw DataError(source + ": duplicate gene '" + t.header[j] + "'");
    m.gene_ids.push_back(t.header[j]);
  }
  seen.clear();
  const std::size_t g = m.gene_ids.size();
  m.values.reserve(t.rows.size() * g);
  for (const auto& row : t.rows) {
    if (row.fields.size() != t.header.size()) {
      throw DataError(loc(source, row.line) + ": expected " + std::to_string(t.header.size()) + " fields, got " +
                      std::to_string(row.fields.size()));
    }
    if (!seen.insert(row.fields[0]).second) throw DataError(loc(source, row.line) + ": duplicate cell '" + row.fields[0] + "'");
    m.cell_ids.push_back(row.fields[0]);
    for (std::size_t j = 1; j < row.fields.size(); ++j) {
      m.values.push_back(csv::parse_double(row.fields[j], loc(source, row.line) + " column " + std::to_string(j + 1)));
    }
  }
  return m;
}

ExpressionMatrix load_expression(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_expression(in, path.string());
}

void write_expression(std::ostream& out, const ExpressionMatrix& m) {
  std::vector<std::string> fields{"cell_id"};
  fields.insert(fields.end(), m.gene_ids.begin(), m.gene_ids.end());
  csv::write_row(out, fields);
  for (std::size_t c = 0; c < m.n_cells(); ++c) {
    fields.assign(1, m.cell_ids[c]);
    for (std::size_t g = 0; g < m.n_genes(); ++g) fields.push_back(csv::format_double(m.at(c, g)));
    csv::write_row(out, fields);
  }
}

NormStats compute_stats(const ExpressionMatrix& m) {
  if (m.n_cells() < 2) throw Error("z-score normalization needs at least 2 cells, got " + std::to_string(m.n_cells()));
  NormStats stats(m.n_genes());
  const double n = static_cast<double>(m.n_cells());
  for (std::size_t g = 0; g < m.n_genes(); ++g) {
    double mean = 0.0;
    for (std::size_t c = 0; c < m.n_cells(); ++c) mean += m.at(c, g);
    mean /= n;
    double ss = 0.0;
    bool constant = true;
    for (std::size_t c = 0; c < m.n_cells(); ++c) {
      ss += (m.at(c, g) - mean) * (m.at(c, g) - mean);
      constant = constant && m.at(c, g) == m.at(0, g);
    }
    stats[g] = GeneStats{m.gene_ids[g], mean, constant ? 0.0 : std::sqrt(ss / n)};
  }
  return stats;
}

ExpressionMatrix zscore_normalize(const ExpressionMatrix& m, NormStats* stats_out) {
  if (m.normalized) throw Error("expression matrix is already normalized");
  auto stats = compute_stats(m);
  auto out = apply_stats(m, stats);
  if (stats_out != nullptr) *stats_out = std::move(stats);
  return out;
}

ExpressionMatrix apply_stats(const ExpressionMatrix& m, const NormStats& stats, std::vector<std::string>* dropped) {
  if (m.normalized) throw Error("expression matrix is already normalized");
  std::unordered_map<std::string, const GeneStats*> by_gene;
  for (const auto& s : stats) by_gene.emplace(s.gene_id, &s);
  std::vector<std::size_t> keep;
  ExpressionMatrix out;
  out.cell_ids = m.cell_ids;
  out.normalized = true;
  for (std::size_t g = 0; g < m.n_genes(); ++g) {
    if (by_gene.count(m.gene_ids[g]) != 0) {
      keep.push_back(g);
      out.gene_ids.push_back(m.gene_ids[g]);
    } else if (dropped != nullptr) {
      dropped->push_back(m.gene_ids[g]);
    }
  }
  out.values.resize(m.n_cells() * keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto& s = *by_gene.at(m.gene_ids[keep[k]]);
    for (std::size_t c = 0; c < m.n_cells(); ++c) {
      out.at(c, k) = s.std > 0.0 ? (m.at(c, keep[k]) - s.mean) / s.std : 0.0;
    }
  }
  return out;
}

void save_stats(const std::filesystem::path& path, const NormStats& stats) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  csv::write_row(out, {"gene_id", "mean", "std"});
  for (const auto& s : stats) csv::write_row(out, {s.gene_id, csv::format_double(s.mean), csv::format_double(s.std)});
}

NormStats load_stats(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const auto ig = t.column("gene_id"), im = t.column("mean"), is = t.column("std");
  NormStats stats;
  for (const auto& r : t.rows) {
    if (r.fields.size() != t.header.size()) throw DataError(loc(t.source, r.line) + ": ragged row");
    const auto where = loc(t.source, r.line);
    GeneStats s{r.fields[ig], csv::parse_double(r.fields[im], where), csv::parse_double(r.fields[is], where)};
    if (s.std < 0.0) throw DataError(where + ": negative std");
    stats.push_back(std::move(s));
  }
  return stats;
}

std::size_t PathwayDB::n_g() const {
  std::size_t n = 0;
  for (const auto& p : pathways) n = std::max(n, p.genes.size());
  return n;
}

PathwayDB parse_pathways(std::istream& in, const std::string& source) {
  PathwayDB db;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto fields = csv::split_line(line, '\t');
    Pathway p;
    p.id = fields[0];
    if (p.id.empty()) throw DataError(loc(source, lineno) + ": empty pathway id");
    if (fields.size() > 1) p.description = fields[1];
    std::unordered_set<std::string> seen;
    for (std::size_t j = 2; j < fields.size(); ++j) {
      if (fields[j].empty()) continue;
      if (seen.insert(fields[j]).second) p.genes.push_back(fields[j]);
    }
    if (p.genes.empty()) throw DataError(loc(source, lineno) + ": pathway '" + p.id + "' has no genes");
    if (!ids.insert(p.id).second) throw DataError(loc(source, lineno) + ": duplicate pathway '" + p.id + "'");
    db.pathways.push_back(std::move(p));
  }
  if (db.pathways.empty()) throw DataError(source + ": no pathways");
  return db;
}

PathwayDB load_pathways(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  return parse_pathways(in, path.string());
}

PathwayLayout::PathwayLayout(const PathwayDB& db, const ExpressionMatrix& m) : n_p_(db.n_p()), n_g_(db.n_g()) {
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t g = 0; g < m.n_genes(); ++g) col.emplace(m.gene_ids[g], g);
  std::set<std::string> missing;
  for (const auto& p : db.pathways) {
    auto& slots = columns_.emplace_back();
    for (const auto& gene : p.genes) {
      auto it = col.find(gene);
      if (it == col.end()) {
        missing.insert(gene);
        slots.emplace_back(std::nullopt);
      } else {
        slots.emplace_back(it->second);
      }
    }
  }
  missing_.assign(missing.begin(), missing.end());
}

ad::Matrix PathwayLayout::tensor(const ExpressionMatrix& m, std::size_t cell) const {
  if (!m.normalized) throw Error("pathway tensor requires a normalized expression matrix");
  if (cell >= m.n_cells()) throw Error("pathway tensor: cell row out of range");
  ad::Matrix out(n_p_, n_g_);
  for (std::size_t p = 0; p < n_p_; ++p) {
    for (std::size_t s = 0; s < columns_[p].size(); ++s) {
      if (columns_[p][s]) out(p, s) = m.at(cell, *columns_[p][s]);
    }
  }
  return out;
}

ad::Matrix build_pathway_tensor(const ExpressionMatrix& m, const PathwayDB& db, const std::string& cell_id,
                                std::vector<std::string>* missing_genes) {
  const auto row = m.cell_index(cell_id);
  if (!row) throw Error("unknown cell '" + cell_id + "'");
  PathwayLayout layout(db, m);
  if (missing_genes != nullptr) *missing_genes = layout.missing_genes();
  return layout.tensor(m, *row);
}

namespace {

std::vector<std::string> distinct(const std::vector<Response>& rows, std::string Response::*field) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : rows) {
    if (seen.insert(r.*field).second) out.push_back(r.*field);
  }
  return out;
}

}  // namespace

std::vector<std::string> ResponseTable::cell_ids() const { return distinct(rows, &Response::cell_id); }
std::vector<std::string> ResponseTable::drug_ids() const { return distinct(rows, &Response::drug_id); }

ResponseTable parse_responses(std::istream& in, const std::string& source, const std::set<std::string>& excluded) {
  const auto t = csv::parse(in, source);
  const auto ic = t.column("cell_id"), id = t.column("drug_id"), iy = t.column("ln_ic50");
  ResponseTable out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& r : t.rows) {
    const auto where = loc(source, r.line);
    if (r.fields.size() != t.header.size()) throw DataError(where + ": ragged row");
    Response resp{r.fields[ic], r.fields[id], csv::parse_double(r.fields[iy], where)};
    if (resp.cell_id.empty() || resp.drug_id.empty()) throw DataError(where + ": empty id");
    if (excluded.count(resp.drug_id) != 0) {
      ++out.excluded_rows;
      continue;
    }
    auto [it, inserted] = index.emplace(std::make_pair(resp.cell_id, resp.drug_id), out.rows.size());
    if (!inserted) {
      if (out.rows[it->second].ln_ic50 != resp.ln_ic50) {
        throw DataError(where + ": conflicting duplicate for (" + resp.cell_id + ", " + resp.drug_id + ")");
      }
      ++out.duplicates_merged;
      continue;
    }
    out.rows.push_back(std::move(resp));
  }
  return out;
}

ResponseTable load_responses(const std::filesystem::path& path, const std::set<std::string>& excluded) {
  auto in = open_or_throw(path);
  return parse_responses(in, path.string(), excluded);
}

void write_pathways(std::ostream& out, const PathwayDB& db) {
  for (const auto& p : db.pathways) {
    out << p.id << '\t' << p.description;
    for (const auto& g : p.genes) out << '\t' << g;
    out << '\n';
  }
}

void write_responses(std::ostream& out, const ResponseTable& t) {
  csv::write_row(out, {"cell_id", "drug_id", "ln_ic50"});
  for (const auto& r : t.rows) csv::write_row(out, {r.cell_id, r.drug_id, csv::format_double(r.ln_ic50)});
}

}  // namespace dispa::data
