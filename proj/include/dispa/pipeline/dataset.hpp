#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dispa/chem/brics.hpp"
#include "dispa/data/pathway.hpp"
#include "dispa/embed/embedding.hpp"
#include "dispa/train/trainer.hpp"

namespace dispa::pipeline {

struct DrugInput {
  std::string id;
  std::string smiles;
};

// CSV with columns drug_id, smiles.
std::vector<DrugInput> load_drugs(const std::filesystem::path& path);
std::vector<DrugInput> parse_drugs(std::istream& in, const std::string& source);

struct DrugOptions {
  bool allow_salts = false;
  bool keep_unfragmented = true;  // keep drugs with no cleavable bond as one fragment
};

struct PreparedDrug {
  std::string id;
  std::string smiles;
  std::vector<chem::Fragment> fragments;
};

struct ExcludedDrug {
  std::string id;
  std::string smiles;
  std::string reason;
};

struct PreparedDrugs {
  std::vector<PreparedDrug> drugs;
  std::vector<ExcludedDrug> excluded;
  std::vector<std::string> warnings;  // parser warnings, prefixed by drug id
};

// Parses and fragments every drug; unparsable molecules, unsupported
// elements and (optionally) unfragmentable ones are excluded, not fatal.
PreparedDrugs prepare_drugs(const std::vector<DrugInput>& drugs, const DrugOptions& options = {});

// Fragment table CSV: drug_id, fragment_index, fragment_smiles, attachment_count.
void write_fragment_table(std::ostream& out, const std::vector<PreparedDrug>& drugs);
void write_excluded(std::ostream& out, const std::vector<ExcludedDrug>& excluded);

struct BuildReport {
  std::vector<std::string> missing_genes;  // pathway genes absent from the expression matrix
};

// Assembles model inputs. `expression` must be normalized. Cells follow the
// expression order, drugs the prepared order. Responses must resolve.
train::Dataset build_dataset(const data::ExpressionMatrix& expression, const data::PathwayDB& pathways,
                             const std::vector<PreparedDrug>& drugs, const data::ResponseTable& responses,
                             const embed::EmbeddingConfig& embedding, const embed::EmbeddingStore* store = nullptr,
                             BuildReport* report = nullptr);

}  // namespace dispa::pipeline
