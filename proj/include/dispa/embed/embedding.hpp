#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dispa/ad/matrix.hpp"

namespace dispa::embed {

enum class Mode { kFile, kHashed };

struct EmbeddingConfig {
  std::size_t dim = 64;
  Mode mode = Mode::kHashed;
  std::size_t ngram_min = 1;
  std::size_t ngram_max = 3;

  // Throws on dim < 8 or an inverted n-gram range.
  void validate() const;
};

// Signed feature hashing of counted character n-grams, L2-normalised.
std::vector<double> embed_string(std::string_view s, const EmbeddingConfig& cfg);

struct DrugEmbedding {
  std::string drug_id;
  std::vector<double> vector;
};

struct SubEmbeddings {
  std::string drug_id;
  ad::Matrix matrix;  // one row per fragment
};

// Vectors keyed by drug id (drug level) or (drug id, fragment index).
class EmbeddingStore {
 public:
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return drugs_.size() + fragments_.size(); }

  void add_drug(const std::string& drug_id, std::vector<double> v);
  void add_fragment(const std::string& drug_id, std::size_t index, std::vector<double> v);
  const std::vector<double>* drug(const std::string& drug_id) const;
  const std::vector<double>* fragment(const std::string& drug_id, std::size_t index) const;

  // Adds every entry of `other`; dims must agree, keys must not collide.
  void merge(const EmbeddingStore& other);

 private:
  void check_dim(std::size_t n);
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>> drugs_;
  std::map<std::pair<std::string, std::size_t>, std::vector<double>> fragments_;
};

// CSV `drug_id[,fragment_index],v0..v{d-1}`. Without a fragment_index column
// (or with an empty one) rows are drug level.
EmbeddingStore load_embedding_file(const std::filesystem::path& path);
EmbeddingStore parse_embedding_file(std::istream& in, const std::string& source);

// Drug vector from the full SMILES plus one row per fragment. File mode
// looks everything up in `store` and throws on a miss or dim mismatch.
std::pair<DrugEmbedding, SubEmbeddings> embed_drug(const std::string& drug_id, const std::string& smiles,
                                                   const std::vector<std::string>& fragment_smiles,
                                                   const EmbeddingConfig& cfg, const EmbeddingStore* store = nullptr);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace dispa::embed
