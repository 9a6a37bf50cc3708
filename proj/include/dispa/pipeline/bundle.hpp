#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dispa/data/pathway.hpp"
#include "dispa/embed/embedding.hpp"
#include "dispa/pipeline/dataset.hpp"
#include "dispa/train/trainer.hpp"

namespace dispa::pipeline {

// File names inside a bundle directory.
inline constexpr const char* kBundleExpression = "expression_z.csv";
inline constexpr const char* kBundleStats = "norm_stats.csv";
inline constexpr const char* kBundlePathways = "pathways.gmt";
inline constexpr const char* kBundleDrugs = "drugs.csv";
inline constexpr const char* kBundleFragments = "fragments.csv";
inline constexpr const char* kBundleExcluded = "excluded_drugs.csv";
inline constexpr const char* kBundleEmbeddings = "embeddings.csv";
inline constexpr const char* kBundleResponses = "responses.csv";
inline constexpr const char* kBundleSummary = "summary.json";

struct PrepareInputs {
  std::filesystem::path expression;
  std::filesystem::path responses;
  std::filesystem::path pathways;
  std::filesystem::path drugs;
  std::optional<std::filesystem::path> embedding_file;  // required when the embedding mode is kFile
  DrugOptions drug_options;
  embed::EmbeddingConfig embedding;
};

struct BundleSummary {
  std::size_t n_cells = 0;
  std::size_t n_genes = 0;
  std::size_t n_p = 0;
  std::size_t n_g = 0;
  std::size_t n_drugs = 0;
  std::size_t n_excluded_drugs = 0;
  std::size_t n_pairs = 0;
  std::size_t excluded_response_rows = 0;  // rows of excluded drugs
  std::size_t unmatched_response_rows = 0;  // cell or drug absent from the inputs
  std::size_t duplicates_merged = 0;
  std::vector<std::string> missing_genes;
  std::vector<std::string> warnings;
  DrugOptions drug_options;
  embed::EmbeddingConfig embedding;
  std::string stats_digest;  // digest of norm_stats.csv, the reference checkpoints carry
};

// Validates and assembles every input into `out_dir`. Inputs are never modified.
BundleSummary prepare_bundle(const PrepareInputs& inputs, const std::filesystem::path& out_dir);

struct Bundle {
  std::filesystem::path dir;
  BundleSummary summary;
  data::PathwayDB pathways;
  data::NormStats stats;
  std::vector<PreparedDrug> drugs;
  embed::EmbeddingStore embeddings;
  train::Dataset data;
};

Bundle load_bundle(const std::filesystem::path& dir);

// Model inputs for arbitrary expression profiles (new cells), normalised with
// the bundle's stored statistics. Pairs cover every (cell, drug) combination,
// cell-major, with y = 0.
train::Dataset project_expression(const Bundle& bundle, const data::ExpressionMatrix& raw,
                                  std::vector<std::string>* dropped_genes = nullptr);

}  // namespace dispa::pipeline
