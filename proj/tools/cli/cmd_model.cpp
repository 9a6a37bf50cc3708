#include <fstream>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

#include "common.hpp"
#include "dispa/analysis/interpret.hpp"
#include "dispa/pipeline/bundle.hpp"
#include "dispa/train/report.hpp"
#include "dispa/util/csv.hpp"
#include "dispa/util/error.hpp"
#include "dispa/util/hash.hpp"

namespace dispa::cli {
namespace {

std::ofstream create(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string bundle_digest(const fs::path& dir) {
  std::string text;
  for (const auto& [rel, d] : tree_digests(dir, dir / "manifest.json")) text += rel + "=" + d + ";";
  return hash::to_hex(hash::hash_bytes(text));
}

struct SplitOptions {
  std::string ratios = "3,1,1";
  bool fixed_test = false;
  std::uint64_t test_seed = 0;
  std::string test_cells;
  std::string test_drugs;

  train::SplitSpec spec(train::SplitMode mode, std::uint64_t seed) const {
    train::SplitSpec s;
    s.mode = mode;
    s.seed = seed;
    const auto r = split_list(ratios);
    if (r.size() != 3) throw Error("--ratios needs three comma-separated values");
    for (std::size_t i = 0; i < 3; ++i) s.ratios[i] = csv::parse_double(r[i], "--ratios");
    s.fixed_test = fixed_test;
    s.test_seed = test_seed;
    s.test_cells = split_list(test_cells);
    s.test_drugs = split_list(test_drugs);
    return s;
  }

  void add(CLI::App* c) {
    c->add_option("--ratios", ratios, "train,val,test ratios")->capture_default_str();
    c->add_flag("--fixed-test", fixed_test, "Hold the test partition fixed across seeds");
    c->add_option("--test-seed", test_seed, "Seed of the fixed test partition");
    c->add_option("--test-cells", test_cells, "Explicit test cell ids (comma-separated)");
    c->add_option("--test-drugs", test_drugs, "Explicit test drug ids (comma-separated)");
  }
};

void write_pair_predictions(std::ostream& out, const train::Dataset& data, const std::vector<std::size_t>& pairs,
                            const std::vector<double>& pred) {
  csv::write_row(out, {"cell_id", "drug_id", "ln_ic50", "ln_ic50_pred"});
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = data.pairs[pairs[i]];
    csv::write_row(out, {data.cell_ids[p.cell], data.drug_ids[p.drug], csv::format_double(p.y),
                         csv::format_double(pred[i])});
  }
}

// Refuses checkpoints that do not belong to the bundle or to the requested model.
model::ModelParams load_guarded(const fs::path& ckpt, const pipeline::Bundle& bundle, const Context& ctx) {
  model::CheckpointMeta meta;
  auto params = model::load_checkpoint(ckpt, &meta);
  const auto& c = params.config;
  const std::size_t n_g = bundle.data.n_g();
  if (c.n_p != bundle.data.n_p() || c.n_g != n_g || c.d_e != bundle.data.d_e()) {
    throw ShapeError("checkpoint " + ckpt.string() + " expects N_p=" + std::to_string(c.n_p) + " N_g=" +
                     std::to_string(c.n_g) + " d_e=" + std::to_string(c.d_e) + ", bundle has N_p=" +
                     std::to_string(bundle.data.n_p()) + " N_g=" + std::to_string(n_g) +
                     " d_e=" + std::to_string(bundle.data.d_e()));
  }
  if (meta.stats_ref != bundle.summary.stats_digest) {
    throw ShapeError("checkpoint " + ckpt.string() + " was trained against normalization statistics " + meta.stats_ref +
                     ", bundle has " + bundle.summary.stats_digest);
  }
  if (ctx.globals.model_options_given()) {
    auto requested = ctx.globals.run.model;
    requested.n_p = c.n_p;
    requested.n_g = c.n_g;
    requested.d_e = c.d_e;
    if (requested.hash() != c.hash()) {
      throw ShapeError("config hash mismatch: checkpoint " + hash::to_hex(c.hash()) + " {" + c.canonical() +
                       "} vs requested " + hash::to_hex(requested.hash()) + " {" + requested.canonical() + "}");
    }
  }
  return params;
}

struct TrainOptions {
  fs::path bundle;
  fs::path out;
  std::string splits = "random";
  std::size_t seeds = 1;
  SplitOptions split;
};

void run_train(const TrainOptions& o, const Context& ctx) {
  begin(ctx, "train");
  const auto bundle = pipeline::load_bundle(o.bundle);
  const auto digest = bundle_digest(o.bundle);
  const auto responses = bundle.data.responses();
  std::vector<train::RunReport> reports;
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < o.seeds; ++k) seeds.push_back(ctx.globals.seed + k);
  for (const auto& name : split_list(o.splits)) {
    const auto mode = train::parse_split_mode(name);
    for (std::size_t k = 0; k < o.seeds; ++k) {
      const auto spec = o.split.spec(mode, seeds[k]);
      const auto split = train::make_split(responses, spec);
      auto rc = run_config(ctx);
      rc.seed = seeds[k];
      spdlog::info("{} seed {}: {} train, {} val, {} test pairs, {} dropped", name, seeds[k], split.train.size(),
                   split.val.size(), split.test.size(), split.dropped);
      const auto result = train::train(bundle.data, split, rc, [](const train::EpochLog& e) {
        if (e.epoch % 10 == 0) spdlog::info("  epoch {} train mse {:.4f} val rmse {:.4f}", e.epoch, e.train_loss, e.val_rmse);
        else spdlog::debug("  epoch {} train mse {:.4f} val rmse {:.4f}", e.epoch, e.train_loss, e.val_rmse);
        return true;
      });
      const auto pred = train::predict_pairs(result.best, bundle.data, split.test, ctx.globals.threads);
      const auto metrics = train::score(bundle.data, split.test, pred);
      spdlog::info("{} seed {}: best epoch {}, test rmse {:.4f} pcc {:.4f} scc {:.4f}", name, seeds[k],
                   result.best_epoch, metrics.rmse, metrics.pcc, metrics.scc);

      const auto dir = o.out / name / ("seed" + std::to_string(k));
      fs::create_directories(dir);
      model::save_checkpoint(dir / "best.ckpt", result.best,
                             {bundle.summary.stats_digest, "split=" + name + " seed=" + std::to_string(seeds[k])});
      auto report = train::make_report(name + "/seed" + std::to_string(k), spec, split, rc, result, metrics);
      report.bundle_digest = digest;
      create(dir / "report.json") << train::to_json(report).dump(2) << '\n';
      auto preds = create(dir / "test_predictions.csv");
      write_pair_predictions(preds, bundle.data, split.test, pred);
      reports.push_back(std::move(report));
    }
  }
  auto agg = create(o.out / "aggregate.csv");
  train::write_aggregate_csv(agg, reports);
  agg.close();
  write_manifest(o.out, ctx, "train", {{"bundle", o.bundle}}, seeds);
}

struct EvalOptions {
  fs::path bundle;
  fs::path checkpoint;
  fs::path out;
  std::string split = "none";
  std::string subset = "test";
  SplitOptions split_opts;
};

void run_evaluate(const EvalOptions& o, const Context& ctx) {
  begin(ctx, "evaluate");
  const auto bundle = pipeline::load_bundle(o.bundle);
  const auto params = load_guarded(o.checkpoint, bundle, ctx);
  std::vector<std::size_t> pairs;
  if (o.split == "none") {
    pairs.resize(bundle.data.pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i] = i;
  } else {
    const auto split = train::make_split(bundle.data.responses(),
                                         o.split_opts.spec(train::parse_split_mode(o.split), ctx.globals.seed));
    pairs = o.subset == "train" ? split.train : o.subset == "val" ? split.val : split.test;
  }
  const auto pred = train::predict_pairs(params, bundle.data, pairs, ctx.globals.threads);
  const auto metrics = train::score(bundle.data, pairs, pred);
  spdlog::info("{} pairs: rmse {:.4f} pcc {:.4f} scc {:.4f}", metrics.n, metrics.rmse, metrics.pcc, metrics.scc);
  nlohmann::ordered_json j;
  j["checkpoint"] = o.checkpoint.generic_string();
  j["model"] = params.config.canonical();
  j["split"] = o.split;
  if (o.split != "none") j["subset"] = o.subset;
  j["metrics"] = train::to_json(metrics);
  fs::create_directories(o.out);
  create(o.out / "metrics.json") << j.dump(2) << '\n';
  {
    auto f = create(o.out / "predictions.csv");
    write_pair_predictions(f, bundle.data, pairs, pred);
  }
  write_manifest(o.out, ctx, "evaluate", {{"bundle", o.bundle}, {"checkpoint", o.checkpoint}}, {ctx.globals.seed});
}

struct PredictOptions {
  fs::path bundle;
  fs::path checkpoint;
  fs::path expression;
  fs::path out;
};

void run_predict(const PredictOptions& o, const Context& ctx) {
  begin(ctx, "predict");
  const auto bundle = pipeline::load_bundle(o.bundle);
  const auto params = load_guarded(o.checkpoint, bundle, ctx);
  const auto raw = data::load_expression(o.expression);
  std::vector<std::string> dropped;
  const auto ds = pipeline::project_expression(bundle, raw, &dropped);
  if (!dropped.empty()) spdlog::warn("{} genes without stored statistics ignored", dropped.size());
  std::set<std::string> present(raw.gene_ids.begin(), raw.gene_ids.end());
  std::size_t missing = 0;
  for (const auto& p : bundle.pathways.pathways) {
    for (const auto& g : p.genes) missing += present.count(g) == 0;
  }
  if (missing) spdlog::warn("{} pathway gene slots absent from the new profiles, filled with 0", missing);
  std::vector<std::size_t> pairs(ds.pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i] = i;
  const auto pred = train::predict_pairs(params, ds, pairs, ctx.globals.threads);
  fs::create_directories(o.out);
  {
    auto f = create(o.out / "predictions.csv");
    csv::write_row(f, {"unit_id", "drug_id", "ln_ic50_pred"});
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto& p = ds.pairs[i];
      csv::write_row(f, {ds.cell_ids[p.cell], ds.drug_ids[p.drug], csv::format_double(pred[i])});
    }
  }
  spdlog::info("{} predictions for {} units x {} drugs", pred.size(), ds.cell_ids.size(), ds.drug_ids.size());
  write_manifest(o.out, ctx, "predict",
                 {{"bundle", o.bundle}, {"checkpoint", o.checkpoint}, {"expression", o.expression}}, {});
}

struct AttentionOptions {
  fs::path bundle;
  fs::path checkpoint;
  fs::path out;
  std::string cells;
  std::string drugs;
  std::string format = "csv";
  bool per_cell = false;
};

void run_attention(const AttentionOptions& o, const Context& ctx) {
  begin(ctx, "attention");
  const auto bundle = pipeline::load_bundle(o.bundle);
  const auto params = load_guarded(o.checkpoint, bundle, ctx);
  const auto& ds = bundle.data;
  const auto want_cells = split_list(o.cells), want_drugs = split_list(o.drugs);
  const std::set<std::string> cells(want_cells.begin(), want_cells.end()), drugs(want_drugs.begin(), want_drugs.end());
  for (const auto& c : cells) {
    if (std::find(ds.cell_ids.begin(), ds.cell_ids.end(), c) == ds.cell_ids.end()) throw DataError("unknown cell id '" + c + "'");
  }
  for (const auto& d : drugs) {
    if (std::find(ds.drug_ids.begin(), ds.drug_ids.end(), d) == ds.drug_ids.end()) throw DataError("unknown drug id '" + d + "'");
  }
  std::vector<std::size_t> pairs;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    const auto& p = ds.pairs[i];
    if ((cells.empty() || cells.count(ds.cell_ids[p.cell])) && (drugs.empty() || drugs.count(ds.drug_ids[p.drug]))) {
      pairs.push_back(i);
    }
  }
  if (pairs.empty()) throw Error("attention: no pairs match the selection");
  const auto records = analysis::export_attention(params, ds, pairs);
  std::vector<std::string> pathway_ids;
  for (const auto& p : bundle.pathways.pathways) pathway_ids.push_back(p.id);
  fs::create_directories(o.out);
  if (o.format == "csv" || o.format == "both") {
    auto f = create(o.out / "attention.csv");
    analysis::write_attention_csv(f, records, pathway_ids);
  }
  if (o.format == "json" || o.format == "both") {
    auto f = create(o.out / "attention.json");
    analysis::write_attention_json(f, records, pathway_ids);
  }

  // alignment: Spearman of fragment Tanimoto against attention-column cosine
  std::map<std::string, std::vector<const model::AttentionRecord*>> by_drug;
  for (const auto& r : records) by_drug[r.drug_id].push_back(&r);
  auto f = create(o.out / "alignment.csv");
  csv::write_row(f, {"drug_id", "cell_id", "n_fragments", "n_pairs", "score", "status", "method"});
  const std::string method = "spearman(tanimoto(fragment fingerprints), cosine(net path2sub columns))";
  std::size_t scored = 0;
  for (const auto& [drug, recs] : by_drug) {
    const auto di = static_cast<std::size_t>(std::find(ds.drug_ids.begin(), ds.drug_ids.end(), drug) - ds.drug_ids.begin());
    std::vector<chem::FeatureSet> fps;
    for (const auto& frag : bundle.drugs[di].fragments) fps.push_back(chem::fragment_fingerprint(frag));
    const auto emit = [&](const std::string& cell, const ad::Matrix& net) {
      try {
        const auto a = analysis::substructure_alignment(drug, fps, net);
        csv::write_row(f, {drug, cell, std::to_string(fps.size()), std::to_string(a.n_pairs), csv::format_double(a.score), "ok", method});
        ++scored;
      } catch (const Error& e) {
        csv::write_row(f, {drug, cell, std::to_string(fps.size()), "0", "", e.what(), method});
      }
    };
    if (o.per_cell) {
      for (const auto* r : recs) emit(r->cell_id, r->path2sub.net);
    } else {
      emit("mean", analysis::mean_path2sub(recs));
    }
  }
  f.close();
  spdlog::info("{} attention records, {} alignment scores in {}", records.size(), scored, o.out.string());
  write_manifest(o.out, ctx, "attention", {{"bundle", o.bundle}, {"checkpoint", o.checkpoint}}, {});
}

}  // namespace

void add_model_commands(CLI::App& app, Context& ctx) {
  auto tr = std::make_shared<TrainOptions>();
  auto* t = app.add_subcommand("train", "Train over split modes and seeds");
  t->add_option("--bundle", tr->bundle, "Bundle directory from prepare")->required()->check(CLI::ExistingDirectory);
  t->add_option("--out", tr->out, "Run directory")->required();
  t->add_option("--splits", tr->splits, "random, cell_blind, drug_blind, disjoint (comma-separated)")->capture_default_str();
  t->add_option("--seeds", tr->seeds, "Repeated runs per split; run k uses seed+k")->capture_default_str()->check(CLI::PositiveNumber);
  tr->split.add(t);
  t->callback([tr, &ctx] { run_train(*tr, ctx); });

  auto ev = std::make_shared<EvalOptions>();
  auto* e = app.add_subcommand("evaluate", "Score a checkpoint on bundle pairs");
  e->add_option("--bundle", ev->bundle)->required()->check(CLI::ExistingDirectory);
  e->add_option("--checkpoint", ev->checkpoint)->required()->check(CLI::ExistingFile);
  e->add_option("--out", ev->out, "Output directory")->required();
  e->add_option("--split", ev->split, "Split mode, or none for every pair")->capture_default_str();
  e->add_option("--subset", ev->subset, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  ev->split_opts.add(e);
  e->callback([ev, &ctx] { run_evaluate(*ev, ctx); });

  auto pr = std::make_shared<PredictOptions>();
  auto* p = app.add_subcommand("predict", "Predict for new expression profiles with the bundle's stored statistics");
  p->add_option("--bundle", pr->bundle)->required()->check(CLI::ExistingDirectory);
  p->add_option("--checkpoint", pr->checkpoint)->required()->check(CLI::ExistingFile);
  p->add_option("--expression", pr->expression, "Raw expression CSV (unit_id, genes...)")->required()->check(CLI::ExistingFile);
  p->add_option("--out", pr->out, "Output directory")->required();
  p->callback([pr, &ctx] { run_predict(*pr, ctx); });

  auto at = std::make_shared<AttentionOptions>();
  auto* a = app.add_subcommand("attention", "Export attention maps and substructure alignment scores");
  a->add_option("--bundle", at->bundle)->required()->check(CLI::ExistingDirectory);
  a->add_option("--checkpoint", at->checkpoint)->required()->check(CLI::ExistingFile);
  a->add_option("--out", at->out, "Output directory")->required();
  a->add_option("--cells", at->cells, "Cell ids (comma-separated, default all)");
  a->add_option("--drugs", at->drugs, "Drug ids (comma-separated, default all)");
  a->add_option("--format", at->format)->check(CLI::IsMember({"csv", "json", "both"}))->capture_default_str();
  a->add_flag("--per-cell", at->per_cell, "Alignment per (cell, drug) instead of the mean map");
  a->callback([at, &ctx] { run_attention(*at, ctx); });
}

}  // namespace dispa::cli
