#include "dispa/pipeline/bundle.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "dispa/util/csv.hpp"
#include "dispa/util/error.hpp"
#include "dispa/util/hash.hpp"

namespace dispa::pipeline {
namespace {

namespace fs = std::filesystem;

std::ofstream create(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::ifstream open(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::string mode_name(embed::Mode m) { return m == embed::Mode::kFile ? "file" : "hashed"; }

embed::Mode parse_mode(const std::string& s) {
  if (s == "file") return embed::Mode::kFile;
  if (s == "hashed") return embed::Mode::kHashed;
  throw DataError("unknown embedding mode '" + s + "'");
}

void write_embeddings(std::ostream& out, const train::Dataset& ds) {
  std::vector<std::string> header{"drug_id", "fragment_index"};
  for (std::size_t k = 0; k < ds.d_e(); ++k) header.push_back("v" + std::to_string(k));
  csv::write_row(out, header);
  const auto row = [&](const std::string& id, const std::string& index, std::span<const double> v) {
    std::vector<std::string> f{id, index};
    for (double x : v) f.push_back(csv::format_double(x));
    csv::write_row(out, f);
  };
  for (std::size_t d = 0; d < ds.drug_ids.size(); ++d) {
    row(ds.drug_ids[d], "", ds.drug[d].row(0));
    for (std::size_t k = 0; k < ds.sub[d].rows(); ++k) row(ds.drug_ids[d], std::to_string(k), ds.sub[d].row(k));
  }
}

nlohmann::ordered_json summary_json(const BundleSummary& s) {
  nlohmann::ordered_json j;
  j["n_cells"] = s.n_cells;
  j["n_genes"] = s.n_genes;
  j["n_pathways"] = s.n_p;
  j["max_pathway_genes"] = s.n_g;
  j["n_drugs"] = s.n_drugs;
  j["n_excluded_drugs"] = s.n_excluded_drugs;
  j["n_pairs"] = s.n_pairs;
  j["excluded_response_rows"] = s.excluded_response_rows;
  j["unmatched_response_rows"] = s.unmatched_response_rows;
  j["duplicates_merged"] = s.duplicates_merged;
  j["missing_genes"] = s.missing_genes;
  j["warnings"] = s.warnings;
  j["drug_options"] = {{"allow_salts", s.drug_options.allow_salts},
                       {"keep_unfragmented", s.drug_options.keep_unfragmented}};
  j["embedding"] = {{"mode", mode_name(s.embedding.mode)},
                    {"dim", s.embedding.dim},
                    {"ngram_min", s.embedding.ngram_min},
                    {"ngram_max", s.embedding.ngram_max}};
  j["stats_digest"] = s.stats_digest;
  return j;
}

BundleSummary summary_from_json(const nlohmann::json& j) {
  BundleSummary s;
  s.n_cells = j.at("n_cells");
  s.n_genes = j.at("n_genes");
  s.n_p = j.at("n_pathways");
  s.n_g = j.at("max_pathway_genes");
  s.n_drugs = j.at("n_drugs");
  s.n_excluded_drugs = j.at("n_excluded_drugs");
  s.n_pairs = j.at("n_pairs");
  s.excluded_response_rows = j.at("excluded_response_rows");
  s.unmatched_response_rows = j.at("unmatched_response_rows");
  s.duplicates_merged = j.at("duplicates_merged");
  s.missing_genes = j.at("missing_genes").get<std::vector<std::string>>();
  s.warnings = j.at("warnings").get<std::vector<std::string>>();
  s.drug_options.allow_salts = j.at("drug_options").at("allow_salts");
  s.drug_options.keep_unfragmented = j.at("drug_options").at("keep_unfragmented");
  const auto& e = j.at("embedding");
  s.embedding.mode = parse_mode(e.at("mode"));
  s.embedding.dim = e.at("dim");
  s.embedding.ngram_min = e.at("ngram_min");
  s.embedding.ngram_max = e.at("ngram_max");
  s.stats_digest = j.at("stats_digest");
  return s;
}

}  // namespace

BundleSummary prepare_bundle(const PrepareInputs& in, const fs::path& out_dir) {
  in.embedding.validate();
  const auto raw = data::load_expression(in.expression);
  data::NormStats stats;
  const auto z = data::zscore_normalize(raw, &stats);
  const auto pathways = data::load_pathways(in.pathways);
  const auto prepared = prepare_drugs(load_drugs(in.drugs), in.drug_options);

  std::set<std::string> excluded, kept;
  for (const auto& e : prepared.excluded) excluded.insert(e.id);
  for (const auto& d : prepared.drugs) kept.insert(d.id);
  const auto all = data::load_responses(in.responses, excluded);
  data::ResponseTable responses;
  responses.duplicates_merged = all.duplicates_merged;
  responses.excluded_rows = all.excluded_rows;
  std::size_t unmatched = 0;
  for (const auto& r : all.rows) {
    if (!z.cell_index(r.cell_id) || kept.count(r.drug_id) == 0) {
      ++unmatched;
      continue;
    }
    responses.rows.push_back(r);
  }
  if (responses.rows.empty()) throw DataError("no response row matches both a cell and a usable drug");

  std::optional<embed::EmbeddingStore> store;
  if (in.embedding.mode == embed::Mode::kFile) {
    if (!in.embedding_file) throw Error("file embedding mode needs an embedding file");
    store = embed::load_embedding_file(*in.embedding_file);
  }
  BuildReport report;
  const auto ds = build_dataset(z, pathways, prepared.drugs, responses, in.embedding, store ? &*store : nullptr, &report);

  fs::create_directories(out_dir);
  {
    auto f = create(out_dir / kBundleExpression);
    data::write_expression(f, z);
  }
  data::save_stats(out_dir / kBundleStats, stats);
  {
    auto f = create(out_dir / kBundlePathways);
    data::write_pathways(f, pathways);
  }
  {
    auto f = create(out_dir / kBundleDrugs);
    csv::write_row(f, {"drug_id", "smiles"});
    for (const auto& d : prepared.drugs) csv::write_row(f, {d.id, d.smiles});
  }
  {
    auto f = create(out_dir / kBundleFragments);
    write_fragment_table(f, prepared.drugs);
  }
  {
    auto f = create(out_dir / kBundleExcluded);
    write_excluded(f, prepared.excluded);
  }
  {
    auto f = create(out_dir / kBundleEmbeddings);
    write_embeddings(f, ds);
  }
  {
    auto f = create(out_dir / kBundleResponses);
    data::write_responses(f, responses);
  }

  BundleSummary s;
  s.n_cells = z.n_cells();
  s.n_genes = z.n_genes();
  s.n_p = ds.n_p();
  s.n_g = ds.n_g();
  s.n_drugs = prepared.drugs.size();
  s.n_excluded_drugs = prepared.excluded.size();
  s.n_pairs = ds.pairs.size();
  s.excluded_response_rows = all.excluded_rows;
  s.unmatched_response_rows = unmatched;
  s.duplicates_merged = all.duplicates_merged;
  s.missing_genes = report.missing_genes;
  s.warnings = prepared.warnings;
  s.drug_options = in.drug_options;
  s.embedding = in.embedding;
  s.stats_digest = hash::file_digest(out_dir / kBundleStats);
  auto f = create(out_dir / kBundleSummary);
  f << summary_json(s).dump(2) << '\n';
  return s;
}

Bundle load_bundle(const fs::path& dir) {
  Bundle b;
  b.dir = dir;
  {
    auto in = open(dir / kBundleSummary);
    try {
      b.summary = summary_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw DataError((dir / kBundleSummary).string() + ": " + e.what());
    }
  }
  const auto digest = hash::file_digest(dir / kBundleStats);
  if (digest != b.summary.stats_digest) {
    throw DataError(dir.string() + ": normalization statistics changed since prepare (digest " + digest + ", expected " +
                    b.summary.stats_digest + ")");
  }
  auto z = data::load_expression(dir / kBundleExpression);
  z.normalized = true;
  b.stats = data::load_stats(dir / kBundleStats);
  b.pathways = data::load_pathways(dir / kBundlePathways);
  const auto prepared = prepare_drugs(load_drugs(dir / kBundleDrugs), b.summary.drug_options);
  if (!prepared.excluded.empty()) throw DataError(dir.string() + ": bundle drug table contains unusable drugs");
  b.drugs = prepared.drugs;
  b.embeddings = embed::load_embedding_file(dir / kBundleEmbeddings);
  auto cfg = b.summary.embedding;
  cfg.mode = embed::Mode::kFile;
  b.data = build_dataset(z, b.pathways, b.drugs, data::load_responses(dir / kBundleResponses), cfg, &b.embeddings);
  return b;
}

train::Dataset project_expression(const Bundle& bundle, const data::ExpressionMatrix& raw,
                                  std::vector<std::string>* dropped_genes) {
  const auto z = data::apply_stats(raw, bundle.stats, dropped_genes);
  data::ResponseTable all;
  for (const auto& c : z.cell_ids) {
    for (const auto& d : bundle.drugs) all.rows.push_back({c, d.id, 0.0});
  }
  auto cfg = bundle.summary.embedding;
  cfg.mode = embed::Mode::kFile;
  return build_dataset(z, bundle.pathways, bundle.drugs, all, cfg, &bundle.embeddings);
}

}  // namespace dispa::pipeline
