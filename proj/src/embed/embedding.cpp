#include "dispa/embed/embedding.hpp"

#include <cmath>
#include <fstream>

#include "dispa/util/csv.hpp"
#include "dispa/util/error.hpp"
#include "dispa/util/hash.hpp"

namespace dispa::embed {

void EmbeddingConfig::validate() const {
  if (dim < 8) throw Error("embedding dim must be at least 8, got " + std::to_string(dim));
  if (ngram_min == 0 || ngram_min > ngram_max) throw Error("embedding n-gram range is invalid");
}

std::vector<double> embed_string(std::string_view s, const EmbeddingConfig& cfg) {
  cfg.validate();
  if (s.empty()) throw Error("cannot embed an empty string");
  std::vector<double> v(cfg.dim, 0.0);
  for (std::size_t n = cfg.ngram_min; n <= cfg.ngram_max; ++n) {
    if (n > s.size()) break;
    // n-gram length is mixed into the seed so "C" and "CC" windows differ by construction
    const std::uint64_t seed = hash::combine(hash::kSeed, n);
    for (std::size_t i = 0; i + n <= s.size(); ++i) {
      const std::uint64_t h = hash::hash_bytes(s.substr(i, n), seed);
      const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
      v[h % cfg.dim] += sign;
    }
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm == 0.0) {
    // every bucket cancelled; fall back to a single whole-string bucket
    v[hash::hash_bytes(s) % cfg.dim] = 1.0;
    return v;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

void EmbeddingStore::check_dim(std::size_t n) {
  if (n == 0) throw DataError("embedding vector is empty");
  if (dim_ == 0) dim_ = n;
  if (n != dim_) throw DataError("embedding dims differ: " + std::to_string(n) + " vs " + std::to_string(dim_));
}

void EmbeddingStore::add_drug(const std::string& drug_id, std::vector<double> v) {
  check_dim(v.size());
  if (!drugs_.emplace(drug_id, std::move(v)).second) throw DataError("duplicate embedding for drug '" + drug_id + "'");
}

void EmbeddingStore::add_fragment(const std::string& drug_id, std::size_t index, std::vector<double> v) {
  check_dim(v.size());
  if (!fragments_.emplace(std::make_pair(drug_id, index), std::move(v)).second) {
    throw DataError("duplicate embedding for drug '" + drug_id + "' fragment " + std::to_string(index));
  }
}

const std::vector<double>* EmbeddingStore::drug(const std::string& drug_id) const {
  auto it = drugs_.find(drug_id);
  return it == drugs_.end() ? nullptr : &it->second;
}

const std::vector<double>* EmbeddingStore::fragment(const std::string& drug_id, std::size_t index) const {
  auto it = fragments_.find(std::make_pair(drug_id, index));
  return it == fragments_.end() ? nullptr : &it->second;
}

void EmbeddingStore::merge(const EmbeddingStore& other) {
  for (const auto& [k, v] : other.drugs_) add_drug(k, v);
  for (const auto& [k, v] : other.fragments_) add_fragment(k.first, k.second, v);
}

EmbeddingStore parse_embedding_file(std::istream& in, const std::string& source) {
  const auto t = csv::parse(in, source);
  const auto id_col = t.column("drug_id");
  if (id_col != 0) throw DataError(source + ": drug_id must be the first column");
  const bool has_index = t.header.size() > 1 && t.header[1] == "fragment_index";
  const std::size_t first_value = has_index ? 2 : 1;
  if (t.header.size() <= first_value) throw DataError(source + ": no value columns");
  EmbeddingStore store;
  for (const auto& r : t.rows) {
    const auto where = source + ":" + std::to_string(r.line);
    if (r.fields.size() != t.header.size()) throw DataError(where + ": ragged row");
    std::vector<double> v;
    v.reserve(r.fields.size() - first_value);
    for (std::size_t j = first_value; j < r.fields.size(); ++j) v.push_back(csv::parse_double(r.fields[j], where));
    if (has_index && !r.fields[1].empty()) {
      const auto idx = csv::parse_int(r.fields[1], where);
      if (idx < 0) throw DataError(where + ": negative fragment index");
      store.add_fragment(r.fields[0], static_cast<std::size_t>(idx), std::move(v));
    } else {
      store.add_drug(r.fields[0], std::move(v));
    }
  }
  return store;
}

EmbeddingStore load_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_embedding_file(in, path.string());
}

std::pair<DrugEmbedding, SubEmbeddings> embed_drug(const std::string& drug_id, const std::string& smiles,
                                                   const std::vector<std::string>& fragment_smiles,
                                                   const EmbeddingConfig& cfg, const EmbeddingStore* store) {
  cfg.validate();
  if (fragment_smiles.empty()) throw Error("drug '" + drug_id + "' has no fragments");
  DrugEmbedding d{drug_id, {}};
  SubEmbeddings s{drug_id, ad::Matrix(fragment_smiles.size(), cfg.dim)};
  auto put_row = [&](std::size_t i, const std::vector<double>& v) {
    for (std::size_t c = 0; c < cfg.dim; ++c) s.matrix(i, c) = v[c];
  };
  if (cfg.mode == Mode::kHashed) {
    d.vector = embed_string(smiles, cfg);
    for (std::size_t i = 0; i < fragment_smiles.size(); ++i) put_row(i, embed_string(fragment_smiles[i], cfg));
    return {std::move(d), std::move(s)};
  }
  if (store == nullptr) throw Error("file-mode embeddings need a loaded store");
  if (store->dim() != cfg.dim) {
    throw ShapeError("embedding file dim " + std::to_string(store->dim()) + " differs from configured " +
                     std::to_string(cfg.dim));
  }
  const auto* dv = store->drug(drug_id);
  if (dv == nullptr) throw DataError("no drug-level embedding for '" + drug_id + "'");
  d.vector = *dv;
  for (std::size_t i = 0; i < fragment_smiles.size(); ++i) {
    const auto* fv = store->fragment(drug_id, i);
    if (fv == nullptr) throw DataError("no embedding for drug '" + drug_id + "' fragment " + std::to_string(i));
    put_row(i, *fv);
  }
  return {std::move(d), std::move(s)};
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw Error("cosine: zero vector");
  return ab / std::sqrt(aa * bb);
}

}  // namespace dispa::embed
