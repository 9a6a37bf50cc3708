#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dispa/ad/matrix.hpp"
#include "dispa/data/pathway.hpp"
#include "dispa/pipeline/dataset.hpp"

namespace dispa::synth {

// Ground-truth response model, with x_d the fragment counts of drug d and
// a_c the pathway activities of cell c:
//   y = mu + beta . x_d + u . a_c + a_c^T M x_d + noise
// Pathway genes are driven by a_c, so every term is recoverable from inputs.
struct SynthConfig {
  std::size_t n_cells = 50;
  std::size_t n_drugs = 40;
  std::size_t n_genes = 60;
  std::size_t n_pathways = 8;
  std::size_t min_pathway_genes = 6;
  std::size_t max_pathway_genes = 10;
  double noise_fraction = 0.2;    // noise sd relative to the signal sd
  double driver_coupling = -2.0;  // M[p*, f*]
  double driver_main = -1.0;      // beta[f*]
  double driver_rate = 0.4;       // share of drugs carrying the driver
  double sensitive_activity = 0.5;  // a[c, p*] above this marks the sensitive regime
  std::uint64_t seed = 0;
};

struct SynthData {
  SynthConfig config;
  data::ExpressionMatrix expression;  // raw, not normalized
  data::PathwayDB pathways;
  data::ResponseTable responses;
  std::vector<pipeline::DrugInput> drugs;

  // ground truth
  std::vector<std::string> fragment_library;     // canonical fragment SMILES
  std::vector<std::vector<std::size_t>> drug_fragments;  // library index per fragment, fragmenter order
  ad::Matrix activity;                           // cells x pathways
  std::size_t driver_fragment = 0;
  std::size_t driver_pathway = 0;
  std::vector<double> signal;  // noise-free response, aligned with responses.rows
  double noise_sd = 0.0;

  bool drug_has_driver(std::size_t drug) const;
  bool cell_sensitive(std::size_t cell) const;
};

SynthData generate(const SynthConfig& config);

// Writes expression.csv, pathways.gmt, responses.csv, drugs.csv and truth.json.
void write_files(const SynthData& data, const std::filesystem::path& dir);

}  // namespace dispa::synth
