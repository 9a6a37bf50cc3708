#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dispa/chem/brics.hpp"
#include "dispa/model/dispa_model.hpp"
#include "dispa/train/trainer.hpp"

namespace dispa::analysis {

// One record per requested pair, in order.
std::vector<model::AttentionRecord> export_attention(const model::ModelParams& params, const train::Dataset& data,
                                                     const std::vector<std::size_t>& pairs);

// Long format: cell_id, drug_id, view, query, key, softmax1, softmax2, net, lambda.
// Path2Sub queries are pathway ids and keys fragment indices; Drug2Path keys are pathway ids.
void write_attention_csv(std::ostream& out, const std::vector<model::AttentionRecord>& records,
                         const std::vector<std::string>& pathway_ids);
void write_attention_json(std::ostream& out, const std::vector<model::AttentionRecord>& records,
                          const std::vector<std::string>& pathway_ids);

// Mean of the net Path2Sub maps over records of one drug; all must share a shape.
ad::Matrix mean_path2sub(const std::vector<const model::AttentionRecord*>& records);

struct AlignmentScore {
  std::string drug_id;
  double score = 0.0;      // Spearman of (Tanimoto, attention-column cosine) over fragment pairs
  std::size_t n_pairs = 0;
};

// `net` is N_p x N_s; `fingerprints` has one entry per fragment column.
// Throws for N_s < 3 or when either similarity vector is constant.
AlignmentScore substructure_alignment(const std::string& drug_id, const std::vector<chem::FeatureSet>& fingerprints,
                                      const ad::Matrix& net);

struct UnitPrediction {
  std::string unit_id;
  std::string drug_id;
  double value = 0.0;
};

std::vector<UnitPrediction> load_unit_predictions(const std::filesystem::path& path);
// unit_id -> group label
std::map<std::string, std::string> load_groups(const std::filesystem::path& path);
// unit_id -> (x, y)
std::map<std::string, std::pair<double, double>> load_coordinates(const std::filesystem::path& path);

struct GroupComparison {
  std::string drug_id;
  std::string group_a;
  std::string group_b;  // "rest" for the pooled comparison
  std::size_t n_a = 0, n_b = 0;
  double delta = 0.0;   // median(a) - median(b); negative means group_a more sensitive
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  bool selective = false;
};

enum class GroupContrast { kPooledRest, kPairwise };

// For each focal group, tests whether its predictions are lower than the
// comparison set, one-sided; BH runs over drugs within each (focal, comparison)
// family. Units without a label are ignored.
std::vector<GroupComparison> group_selective_drugs(const std::vector<UnitPrediction>& predictions,
                                                   const std::map<std::string, std::string>& groups, double alpha = 0.05,
                                                   GroupContrast contrast = GroupContrast::kPooledRest);

// Drug counts per exact set of groups in which the drug is selective (upset-style).
std::map<std::vector<std::string>, std::size_t> selective_overlap(const std::vector<GroupComparison>& results);

void write_group_comparisons(std::ostream& out, const std::vector<GroupComparison>& results);

}  // namespace dispa::analysis
