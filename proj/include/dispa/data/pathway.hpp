#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "dispa/ad/matrix.hpp"

namespace dispa::data {

// Cells x genes expression, ids in file order.
struct ExpressionMatrix {
  std::vector<std::string> cell_ids;
  std::vector<std::string> gene_ids;
  std::vector<double> values;  // row-major, cells x genes
  bool normalized = false;

  std::size_t n_cells() const { return cell_ids.size(); }
  std::size_t n_genes() const { return gene_ids.size(); }
  double at(std::size_t cell, std::size_t gene) const { return values[cell * gene_ids.size() + gene]; }
  double& at(std::size_t cell, std::size_t gene) { return values[cell * gene_ids.size() + gene]; }
  std::optional<std::size_t> cell_index(const std::string& id) const;
  std::optional<std::size_t> gene_index(const std::string& id) const;
};

// First column holds cell ids, the header holds gene ids.
ExpressionMatrix load_expression(const std::filesystem::path& path);
ExpressionMatrix parse_expression(std::istream& in, const std::string& source);
void write_expression(std::ostream& out, const ExpressionMatrix& m);

struct GeneStats {
  std::string gene_id;
  double mean = 0.0;
  double std = 0.0;  // population std; 0 marks a constant gene
};

using NormStats = std::vector<GeneStats>;

NormStats compute_stats(const ExpressionMatrix& m);

// Per-gene z-scores with population std; constant genes become 0.
// Throws on fewer than two cells or an already normalized matrix.
ExpressionMatrix zscore_normalize(const ExpressionMatrix& m, NormStats* stats_out = nullptr);

// Standardises with stored statistics (zero-shot transfer). Genes without
// stored statistics are dropped and listed in `dropped`.
ExpressionMatrix apply_stats(const ExpressionMatrix& m, const NormStats& stats,
                             std::vector<std::string>* dropped = nullptr);

void save_stats(const std::filesystem::path& path, const NormStats& stats);
NormStats load_stats(const std::filesystem::path& path);

struct Pathway {
  std::string id;
  std::string description;
  std::vector<std::string> genes;  // deduplicated, file order
};

struct PathwayDB {
  std::vector<Pathway> pathways;

  std::size_t n_p() const { return pathways.size(); }
  std::size_t n_g() const;  // largest pathway
};

// GMT: id <TAB> description <TAB> genes...
PathwayDB load_pathways(const std::filesystem::path& path);
PathwayDB parse_pathways(std::istream& in, const std::string& source);
void write_pathways(std::ostream& out, const PathwayDB& db);

// Pathway slots resolved against one expression gene list. Slots whose gene
// is absent from the matrix stay zero.
class PathwayLayout {
 public:
  PathwayLayout(const PathwayDB& db, const ExpressionMatrix& m);

  std::size_t n_p() const { return n_p_; }
  std::size_t n_g() const { return n_g_; }
  const std::vector<std::string>& missing_genes() const { return missing_; }

  // N_p x N_g matrix for one cell row of `m`; leading-slot packing.
  ad::Matrix tensor(const ExpressionMatrix& m, std::size_t cell) const;

 private:
  std::size_t n_p_ = 0;
  std::size_t n_g_ = 0;
  std::vector<std::vector<std::optional<std::size_t>>> columns_;
  std::vector<std::string> missing_;
};

// Convenience single-cell form; throws on an unknown or unnormalized input.
ad::Matrix build_pathway_tensor(const ExpressionMatrix& m, const PathwayDB& db, const std::string& cell_id,
                                std::vector<std::string>* missing_genes = nullptr);

struct Response {
  std::string cell_id;
  std::string drug_id;
  double ln_ic50 = 0.0;
};

struct ResponseTable {
  std::vector<Response> rows;
  std::size_t duplicates_merged = 0;
  std::size_t excluded_rows = 0;  // rows dropped because their drug was excluded

  std::vector<std::string> cell_ids() const;  // distinct, first-seen order
  std::vector<std::string> drug_ids() const;
};

// Columns cell_id, drug_id, ln_ic50. Equal duplicates merge; conflicting ones throw.
ResponseTable load_responses(const std::filesystem::path& path, const std::set<std::string>& excluded_drugs = {});
ResponseTable parse_responses(std::istream& in, const std::string& source,
                              const std::set<std::string>& excluded_drugs = {});
void write_responses(std::ostream& out, const ResponseTable& t);

}  // namespace dispa::data
