#include "dispa/pipeline/dataset.hpp"

#include <fstream>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "dispa/chem/smiles.hpp"
#include "dispa/util/csv.hpp"
#include "dispa/util/error.hpp"

namespace dispa::pipeline {

std::vector<DrugInput> parse_drugs(std::istream& in, const std::string& source) {
  const auto t = csv::parse(in, source);
  const auto id = t.column("drug_id"), sm = t.column("smiles");
  std::vector<DrugInput> out;
  std::unordered_set<std::string> seen;
  for (const auto& r : t.rows) {
    const auto where = source + ":" + std::to_string(r.line);
    if (r.fields.size() != t.header.size()) throw DataError(where + ": ragged row");
    if (r.fields[id].empty()) throw DataError(where + ": empty drug id");
    if (!seen.insert(r.fields[id]).second) throw DataError(where + ": duplicate drug '" + r.fields[id] + "'");
    out.push_back({r.fields[id], r.fields[sm]});
  }
  return out;
}

std::vector<DrugInput> load_drugs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_drugs(in, path.string());
}

PreparedDrugs prepare_drugs(const std::vector<DrugInput>& drugs, const DrugOptions& options) {
  PreparedDrugs out;
  for (const auto& d : drugs) {
    chem::MolGraph g;
    try {
      g = chem::parse_smiles(d.smiles, chem::ParseOptions{options.allow_salts});
    } catch (const chem::SmilesError& e) {
      out.excluded.push_back({d.id, d.smiles, std::string("parse error: ") + e.what()});
      continue;
    }
    if (!chem::has_only_supported_elements(g)) {
      out.excluded.push_back({d.id, d.smiles, "unsupported element"});
      continue;
    }
    auto frags = chem::fragment(g);
    if (frags.size() == 1 && !options.keep_unfragmented) {
      out.excluded.push_back({d.id, d.smiles, "no cleavable bond"});
      continue;
    }
    for (const auto& w : g.warnings) out.warnings.push_back(d.id + ": " + w);
    out.drugs.push_back({d.id, d.smiles, std::move(frags)});
  }
  return out;
}

void write_fragment_table(std::ostream& out, const std::vector<PreparedDrug>& drugs) {
  csv::write_row(out, {"drug_id", "fragment_index", "fragment_smiles", "attachment_count"});
  for (const auto& d : drugs) {
    for (std::size_t i = 0; i < d.fragments.size(); ++i) {
      csv::write_row(out, {d.id, std::to_string(i), d.fragments[i].smiles, std::to_string(d.fragments[i].attachment_count)});
    }
  }
}

void write_excluded(std::ostream& out, const std::vector<ExcludedDrug>& excluded) {
  csv::write_row(out, {"drug_id", "smiles", "reason"});
  for (const auto& e : excluded) csv::write_row(out, {e.id, e.smiles, e.reason});
}

train::Dataset build_dataset(const data::ExpressionMatrix& expression, const data::PathwayDB& pathways,
                             const std::vector<PreparedDrug>& drugs, const data::ResponseTable& responses,
                             const embed::EmbeddingConfig& embedding, const embed::EmbeddingStore* store,
                             BuildReport* report) {
  if (!expression.normalized) throw Error("build_dataset: expression must be normalized first");
  train::Dataset ds;
  const data::PathwayLayout layout(pathways, expression);
  if (report != nullptr) report->missing_genes = layout.missing_genes();
  std::unordered_map<std::string, std::size_t> cell_pos, drug_pos;
  for (std::size_t c = 0; c < expression.n_cells(); ++c) {
    ds.cell_ids.push_back(expression.cell_ids[c]);
    ds.path.push_back(layout.tensor(expression, c));
    cell_pos.emplace(expression.cell_ids[c], c);
  }
  for (const auto& d : drugs) {
    std::vector<std::string> frag_smiles;
    for (const auto& f : d.fragments) frag_smiles.push_back(f.smiles);
    auto [de, se] = embed::embed_drug(d.id, d.smiles, frag_smiles, embedding, store);
    drug_pos.emplace(d.id, ds.drug_ids.size());
    ds.drug_ids.push_back(d.id);
    ds.drug.push_back(ad::Matrix::row_vector(de.vector));
    ds.sub.push_back(std::move(se.matrix));
  }
  for (const auto& r : responses.rows) {
    auto c = cell_pos.find(r.cell_id);
    if (c == cell_pos.end()) throw DataError("response refers to cell '" + r.cell_id + "' absent from the expression matrix");
    auto d = drug_pos.find(r.drug_id);
    if (d == drug_pos.end()) throw DataError("response refers to drug '" + r.drug_id + "' absent from the drug table");
    ds.pairs.push_back({c->second, d->second, r.ln_ic50});
  }
  ds.validate();
  return ds;
}

}  // namespace dispa::pipeline
