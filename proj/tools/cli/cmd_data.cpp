#include <cstdlib>
#include <fstream>
#include <iostream>

#include <spdlog/spdlog.h>

#include "common.hpp"
#include "dispa/chem/brics.hpp"
#include "dispa/pipeline/bundle.hpp"
#include "dispa/synth/generator.hpp"
#include "dispa/util/csv.hpp"
#include "dispa/util/error.hpp"
#include "dispa/util/hash.hpp"

namespace dispa::cli {
namespace {

struct PrepareOptions {
  pipeline::PrepareInputs in;
  std::string embedding_mode = "hashed";
  std::string embedding_file;
  bool drop_unfragmented = false;
  fs::path out;
};

// Key over input contents and every option that shapes the bundle.
std::string bundle_key(const PrepareOptions& o) {
  std::string text;
  for (const auto& p : {o.in.expression, o.in.responses, o.in.pathways, o.in.drugs}) text += hash::file_digest(p) + ";";
  if (!o.embedding_file.empty()) text += hash::file_digest(o.embedding_file) + ";";
  text += o.embedding_mode + ";" + std::to_string(o.in.embedding.dim) + ";" + std::to_string(o.in.embedding.ngram_min) +
          ";" + std::to_string(o.in.embedding.ngram_max) + ";" + (o.in.drug_options.allow_salts ? "s" : "-") +
          (o.in.drug_options.keep_unfragmented ? "k" : "-") + ";" + std::string(chem::kRuleTableVersion);
  return hash::to_hex(hash::hash_bytes(text));
}

void run_prepare(PrepareOptions o, const Context& ctx) {
  begin(ctx, "prepare");
  o.in.embedding.mode = o.embedding_mode == "file" ? embed::Mode::kFile : embed::Mode::kHashed;
  if (!o.embedding_file.empty()) o.in.embedding_file = o.embedding_file;
  o.in.drug_options.keep_unfragmented = !o.drop_unfragmented;

  const char* cache_env = std::getenv("DISPA_CACHE_DIR");
  const fs::path cached = cache_env ? fs::path(cache_env) / "bundles" / bundle_key(o) : fs::path();
  if (!cached.empty() && fs::exists(cached / pipeline::kBundleSummary)) {
    spdlog::info("using cached bundle {}", cached.string());
    fs::create_directories(o.out);
    for (const auto& e : fs::directory_iterator(cached)) {
      fs::copy_file(e.path(), o.out / e.path().filename(), fs::copy_options::overwrite_existing);
    }
  } else {
    pipeline::prepare_bundle(o.in, o.out);
    if (!cached.empty()) {
      fs::create_directories(cached);
      for (const auto& e : fs::directory_iterator(o.out)) {
        if (e.path().filename() != "manifest.json") {
          fs::copy_file(e.path(), cached / e.path().filename(), fs::copy_options::overwrite_existing);
        }
      }
    }
  }
  const auto bundle = pipeline::load_bundle(o.out);
  const auto& s = bundle.summary;
  spdlog::info("bundle {}: {} cells, {} genes, N_p {}, N_g {}, {} drugs ({} excluded), {} pairs", o.out.string(),
               s.n_cells, s.n_genes, s.n_p, s.n_g, s.n_drugs, s.n_excluded_drugs, s.n_pairs);
  if (!s.missing_genes.empty()) spdlog::warn("{} pathway genes absent from the expression matrix", s.missing_genes.size());
  if (s.unmatched_response_rows) spdlog::warn("{} response rows dropped: unknown cell or drug", s.unmatched_response_rows);
  for (const auto& w : s.warnings) spdlog::warn("{}", w);
  std::vector<ManifestInput> inputs{{"expression", o.in.expression},
                                    {"responses", o.in.responses},
                                    {"pathways", o.in.pathways},
                                    {"drugs", o.in.drugs}};
  if (!o.embedding_file.empty()) inputs.push_back({"embeddings", o.embedding_file});
  write_manifest(o.out, ctx, "prepare", inputs, {});
}

struct FragmentOptions {
  std::string smiles;
  fs::path drugs;
  fs::path out;
  bool print_rules = false;
  bool allow_salts = false;
  bool drop_unfragmented = false;
};

void run_fragment(const FragmentOptions& o, const Context& ctx) {
  begin(ctx, "fragment");
  if (o.print_rules) {
    std::cout << "# rule table " << chem::kRuleTableVersion << '\n';
    csv::write_row(std::cout, {"rule", "env_a", "env_b"});
    for (const auto& r : chem::default_rules()) {
      csv::write_row(std::cout, {r.id, std::string(chem::env_label(r.env_a)), std::string(chem::env_label(r.env_b))});
    }
    if (o.smiles.empty() && o.drugs.empty()) return;
  }
  std::vector<pipeline::DrugInput> drugs;
  if (!o.smiles.empty()) drugs.push_back({"input", o.smiles});
  if (!o.drugs.empty()) {
    auto more = pipeline::load_drugs(o.drugs);
    drugs.insert(drugs.end(), more.begin(), more.end());
  }
  if (drugs.empty()) throw Error("fragment: give --smiles, --drugs or --print-rules");
  pipeline::DrugOptions opt;
  opt.allow_salts = o.allow_salts;
  opt.keep_unfragmented = !o.drop_unfragmented;
  const auto prepared = pipeline::prepare_drugs(drugs, opt);
  for (const auto& w : prepared.warnings) spdlog::warn("{}", w);
  for (const auto& e : prepared.excluded) spdlog::warn("excluded {}: {}", e.id, e.reason);
  if (o.out.empty()) {
    pipeline::write_fragment_table(std::cout, prepared.drugs);
  } else {
    fs::create_directories(o.out.parent_path().empty() ? "." : o.out.parent_path());
    std::ofstream f(o.out);
    if (!f) throw Error("cannot write " + o.out.string());
    pipeline::write_fragment_table(f, prepared.drugs);
    spdlog::info("{} drugs fragmented, {} excluded, table in {}", prepared.drugs.size(), prepared.excluded.size(),
                 o.out.string());
  }
  if (!prepared.excluded.empty() && !o.out.empty()) {
    std::ofstream f(o.out.parent_path() / "excluded_drugs.csv");
    pipeline::write_excluded(f, prepared.excluded);
  }
}

struct SynthOptions {
  synth::SynthConfig config;
  fs::path out;
};

void run_synth(SynthOptions o, const Context& ctx) {
  begin(ctx, "synth");
  o.config.seed = ctx.globals.seed;
  const auto s = synth::generate(o.config);
  synth::write_files(s, o.out);
  spdlog::info("synthetic data in {}: {} cells x {} drugs, driver fragment {} on pathway {}", o.out.string(),
               o.config.n_cells, o.config.n_drugs, s.fragment_library[s.driver_fragment],
               s.pathways.pathways[s.driver_pathway].id);
  write_manifest(o.out, ctx, "synth", {}, {o.config.seed});
}

}  // namespace

void add_data_commands(CLI::App& app, Context& ctx) {
  auto prep = std::make_shared<PrepareOptions>();
  auto* p = app.add_subcommand("prepare", "Validate inputs and assemble a dataset bundle");
  p->add_option("--expression", prep->in.expression, "Expression CSV (cell_id, genes...)")->required()->check(CLI::ExistingFile);
  p->add_option("--responses", prep->in.responses, "Response CSV (cell_id, drug_id, ln_ic50)")->required()->check(CLI::ExistingFile);
  p->add_option("--pathways", prep->in.pathways, "Pathway GMT file")->required()->check(CLI::ExistingFile);
  p->add_option("--drugs", prep->in.drugs, "Drug CSV (drug_id, smiles)")->required()->check(CLI::ExistingFile);
  p->add_option("--out", prep->out, "Bundle directory")->required();
  p->add_option("--embedding", prep->embedding_mode, "hashed or file")->check(CLI::IsMember({"hashed", "file"}));
  p->add_option("--embedding-file", prep->embedding_file, "Precomputed embeddings for file mode")->check(CLI::ExistingFile);
  p->add_option("--embed-dim", prep->in.embedding.dim, "Hashed embedding width")->capture_default_str();
  p->add_option("--ngram-min", prep->in.embedding.ngram_min)->capture_default_str();
  p->add_option("--ngram-max", prep->in.embedding.ngram_max)->capture_default_str();
  p->add_flag("--allow-salts", prep->in.drug_options.allow_salts, "Keep the largest component of multi-part SMILES");
  p->add_flag("--drop-unfragmented", prep->drop_unfragmented, "Exclude drugs without a cleavable bond");
  p->callback([prep, &ctx] { run_prepare(*prep, ctx); });

  auto frag = std::make_shared<FragmentOptions>();
  auto* f = app.add_subcommand("fragment", "Fragment molecules into BRICS substructures");
  f->add_option("--smiles", frag->smiles, "One SMILES string");
  f->add_option("--drugs", frag->drugs, "Drug CSV (drug_id, smiles)")->check(CLI::ExistingFile);
  f->add_option("--out", frag->out, "Fragment table CSV (default stdout)");
  f->add_flag("--print-rules", frag->print_rules, "Print the cleavage rule table");
  f->add_flag("--allow-salts", frag->allow_salts, "Keep the largest component of multi-part SMILES");
  f->add_flag("--drop-unfragmented", frag->drop_unfragmented, "Exclude drugs without a cleavable bond");
  f->callback([frag, &ctx] { run_fragment(*frag, ctx); });

  auto syn = std::make_shared<SynthOptions>();
  auto* s = app.add_subcommand("synth", "Write the synthetic benchmark inputs and ground truth");
  s->add_option("--out", syn->out, "Output directory")->required();
  s->add_option("--cells", syn->config.n_cells)->capture_default_str();
  s->add_option("--drugs", syn->config.n_drugs)->capture_default_str();
  s->add_option("--genes", syn->config.n_genes)->capture_default_str();
  s->add_option("--pathways", syn->config.n_pathways)->capture_default_str();
  s->add_option("--noise", syn->config.noise_fraction, "Noise sd as a fraction of signal sd")->capture_default_str();
  s->callback([syn, &ctx] { run_synth(*syn, ctx); });
}

}  // namespace dispa::cli
