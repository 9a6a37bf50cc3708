// Acceptance checks; one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/core.h>
#include <json.hpp>

#include "../support/corpus.hpp"
#include "../support/model_fixtures.hpp"
#include "../support/op_cases.hpp"
#include "../support/random_molecules.hpp"
#include "dispa/analysis/stats.hpp"
#include "dispa/chem/brics.hpp"
#include "dispa/chem/smiles.hpp"
#include "dispa/model/dispa_model.hpp"
#include "dispa/pipeline/dataset.hpp"
#include "dispa/synth/generator.hpp"
#include "dispa/train/metrics.hpp"
#include "dispa/train/report.hpp"
#include "dispa/train/split.hpp"
#include "dispa/train/trainer.hpp"
#include "dispa/util/hash.hpp"
#include "dispa/util/random.hpp"

using namespace dispa;
using ad::Matrix;
using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void verdict(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s %d %s: %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  g_failures += !ok;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string digest(const std::vector<std::size_t>& v) {
  std::uint64_t h = hash::kSeed;
  for (auto x : v) h = hash::combine(h, x);
  return hash::to_hex(h);
}

std::string digest(const model::ModelParams& p) {
  std::uint64_t h = hash::kSeed;
  for (const auto& m : p.tensors) {
    for (double x : m.data()) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &x, sizeof bits);
      h = hash::combine(h, bits);
    }
  }
  return hash::to_hex(h);
}

double row_sum(const Matrix& m, std::size_t r) {
  double s = 0.0;
  for (double v : m.row(r)) s += v;
  return s;
}

// --- 1 ---------------------------------------------------------------------

void gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checks = 0, bad = 0;
  for (const auto& op : testing::op_cases()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto r = ad::grad_check(op.f, testing::op_point(op, seed));
      ++checks;
      if (r.skipped || !(r.max_rel_error < 1e-4)) ++bad;
      worst = std::max(worst, r.max_rel_error);
    }
  }
  for (std::size_t heads : {1, 2}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      std::mt19937_64 rng(seed);
      auto c = testing::small_config(heads);
      auto params = model::ModelParams::init(c, seed);
      using namespace model;
      for (auto id : {kP2SLq1, kP2SLk1, kP2SLq2, kP2SLk2, kD2PLq1, kD2PLk1, kD2PLq2, kD2PLk2}) {
        params.tensors[id] = testing::random_matrix(rng, 1, c.d, 0.3);
      }
      const auto path = testing::random_matrix(rng, c.n_p, c.n_g);
      const auto drug = testing::random_matrix(rng, 1, c.d_e);
      const auto sub = testing::random_matrix(rng, 3, c.d_e);
      const Matrix target{{0.7}};
      std::vector<Matrix> point(params.tensors.begin(), params.tensors.end());
      auto f = [&](ad::Tape& t, std::span<const ad::Tensor> x) {
        BoundParams b;
        b.config = &params.config;
        for (std::size_t i = 0; i < kParamCount; ++i) b.t[i] = x[i];
        const auto r = forward(b, t.constant(path), t.constant(drug), t.constant(sub));
        return ad::mse(r.prediction, t.constant(target));
      };
      const auto r = ad::grad_check(f, point);
      ++checks;
      if (r.skipped || !(r.max_rel_error < 1e-4)) ++bad;
      worst = std::max(worst, r.max_rel_error);
    }
  }
  const double sec = seconds_since(t0);
  verdict(1, "gradient suite", bad == 0 && sec < 30.0,
          fmt::format("{} checks, {} failed, max rel error {:.2e}, {:.1f}s", checks, bad, worst, sec));
}

// --- 2 ---------------------------------------------------------------------

void attention_reduction() {
  using namespace model;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> dim(1, 6), rows(1, 9);
  double worst_ref = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    auto c = testing::small_config();
    c.d_a = dim(rng);
    c.d = dim(rng);
    c.lambda_override = 0.0;
    const auto params = ModelParams::init(c, 100 + trial);
    const auto q_in = testing::random_matrix(rng, rows(rng), c.d_a);
    const auto kv_in = testing::random_matrix(rng, rows(rng), c.d_a);
    const bool p2s = trial % 2 == 0;
    ad::Tape t;
    auto b = bind(t, params, false);
    const auto out = diff_attention(b, p2s ? View::kPath2Sub : View::kDrug2Path, t.constant(q_in), t.constant(kv_in));
    const auto ref = testing::reference_attention(q_in, kv_in, params.tensors[p2s ? kP2SWq : kD2PWq],
                                                  params.tensors[p2s ? kP2SWk : kD2PWk],
                                                  params.tensors[p2s ? kP2SWv : kD2PWv], c.d);
    worst_ref = std::max(worst_ref, ad::max_abs_diff(out.output.value(), ref));
  }

  double worst_sum = 0.0;
  std::size_t blocks = 0;
  for (std::size_t heads : {1, 2, 4}) {
    for (int trial = 0; trial < 20; ++trial) {
      auto c = testing::small_config(heads);
      c.d_a = 8;
      c.d = 8;
      if (trial % 4 == 1) c.lambda_override = 0.0;
      if (trial % 4 == 2) c.lambda_override = 0.99;
      auto params = ModelParams::init(c, trial);
      for (auto id : {kP2SLq1, kP2SLk1, kP2SLq2, kP2SLk2, kD2PLq1, kD2PLk1, kD2PLq2, kD2PLk2}) {
        params.tensors[id] = testing::random_matrix(rng, 1, 8, 0.5);
      }
      ad::Tape t;
      auto b = bind(t, params, false);
      const auto q = t.constant(testing::random_matrix(rng, 1 + trial % 5, 8));
      const auto kv = t.constant(testing::random_matrix(rng, 1 + trial % 7, 8));
      for (auto view : {View::kPath2Sub, View::kDrug2Path}) {
        const auto comp = diff_attention(b, view, q, kv).components;
        for (std::size_t r = 0; r < comp.net.rows(); ++r) {
          worst_sum = std::max(worst_sum, std::fabs(row_sum(comp.net, r) - (1.0 - comp.lambda)));
        }
        ++blocks;
      }
    }
  }
  verdict(2, "differential attention reduction", worst_ref < 1e-12 && worst_sum < 1e-9,
          fmt::format("50 shapes max |diff| {:.1e}; {} attention blocks max |row sum - (1 - lambda)| {:.1e}",
                      worst_ref, blocks, worst_sum));
}

// --- 3 ---------------------------------------------------------------------

bool is_partition(const chem::MolGraph& g, const std::vector<chem::Fragment>& frags) {
  std::vector<int> hits(g.atoms.size(), 0);
  for (const auto& f : frags) {
    for (auto a : f.atoms) ++hits[a];
  }
  return std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
}

bool same_fragments(const std::vector<chem::Fragment>& ours, const std::vector<std::string>& reference) {
  if (ours.size() != reference.size()) return false;
  std::vector<bool> used(reference.size(), false);
  for (const auto& f : ours) {
    const auto mine = chem::parse_smiles(f.smiles);
    bool found = false;
    for (std::size_t r = 0; r < reference.size() && !found; ++r) {
      if (!used[r] && chem::isomorphic(mine, chem::parse_smiles(reference[r]))) used[r] = found = true;
    }
    if (!found) return false;
  }
  return true;
}

void chemistry_corpus() {
  using namespace chem;
  std::size_t corpus_bad = 0;
  const auto corpus = testing::load_corpus();
  for (const auto& e : corpus) {
    try {
      const auto g = parse_smiles(e.smiles);
      const auto frags = fragment(g);
      const bool ok = g.atoms.size() == e.atoms && g.bonds.size() == e.bonds && g.rings.size() == e.rings &&
                      isomorphic(parse_smiles(write_smiles(g)), g) && is_partition(g, frags) &&
                      same_fragments(frags, e.brics);
      if (!ok) {
        ++corpus_bad;
        std::printf("  corpus mismatch: %s\n", e.name.c_str());
      }
    } catch (const std::exception& ex) {
      ++corpus_bad;
      std::printf("  corpus error: %s: %s\n", e.name.c_str(), ex.what());
    }
  }

  const auto aspirin = fragment(parse_smiles("CC(=O)Oc1ccccc1C(=O)O"));
  const auto amide = fragment(parse_smiles("CC(=O)NC"));
  const bool fixtures = same_fragments(aspirin, {"CC=O", "O", "c1ccccc1", "O=CO"}) && amide.size() == 2 &&
                        amide[0].atoms == std::vector<std::size_t>{0, 1, 2} &&
                        amide[1].atoms == std::vector<std::size_t>{3, 4};

  testing::RandomMoleculeBuilder builder(20240611);
  std::size_t random_bad = 0;
  for (int i = 0; i < 200; ++i) {
    const auto built = builder.build();
    try {
      const auto g = parse_smiles(write_smiles(built));
      const auto frags = fragment(g);
      bool ok = isomorphic(g, built) && g.rings.size() == g.bonds.size() - g.atoms.size() + 1 && !frags.empty() &&
                is_partition(g, frags);
      for (const auto& f : frags) {
        const auto again = fragment(parse_smiles(f.smiles));
        ok = ok && again.size() == 1 && isomorphic(parse_smiles(again[0].smiles), parse_smiles(f.smiles));
      }
      random_bad += !ok;
    } catch (const std::exception&) {
      ++random_bad;
    }
  }
  verdict(3, "parser and fragmenter corpus", corpus.size() == 20 && corpus_bad == 0 && fixtures && random_bad == 0,
          fmt::format("corpus {}/{} ok, aspirin/amide fixtures {}, random molecules {}/200 ok",
                      corpus.size() - corpus_bad, corpus.size(), fixtures ? "ok" : "mismatch", 200 - random_bad));
}

// --- 4 ---------------------------------------------------------------------

double brute_pcc(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sb += b[i];
  }
  const double ma = sa / n, mb = sb / n;
  for (std::size_t i = 0; i < a.size(); ++i) {
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
    sab += (a[i] - ma) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> brute_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : x) {
      less += y < x[i];
      equal += y == x[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

void statistics_oracles() {
  using namespace analysis;
  const std::vector<double> a{1, 2}, b{3, 4};
  const double p_exact = wilcoxon_rank_sum(a, b, Alternative::kLess).p;
  const bool exact_ok = std::fabs(p_exact - 1.0 / 6.0) < 1e-15;

  rnd::Engine rng(11);
  double worst_route = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> x(6), y(6);
    for (auto& v : x) v = rnd::normal(rng) + (rep % 3 == 0 ? -1.0 : 0.0);
    for (auto& v : y) v = rnd::normal(rng);
    for (auto alt : {Alternative::kLess, Alternative::kGreater}) {
      worst_route = std::max(worst_route, std::fabs(rank_sum_exact_p(x, y, alt) - rank_sum_normal_p(x, y, alt)));
    }
  }

  auto close = [](const std::vector<double>& got, const std::vector<double>& want) {
    if (got.size() != want.size()) return false;
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (std::fabs(got[i] - want[i]) > 1e-12) return false;
    }
    return true;
  };
  const bool bh_ok = close(bh_fdr(std::vector<double>{0.03}), {0.03}) &&
                     close(bh_fdr(std::vector<double>{0.01, 0.04}), {0.02, 0.04}) &&
                     close(bh_fdr(std::vector<double>{0.04, 0.01, 0.045}), {0.045, 0.03, 0.045}) &&
                     close(bh_fdr(std::vector<double>{0.01, 0.02, 0.03, 0.5}), {0.04, 0.04, 0.04, 0.5});

  const std::vector<double> checker{1, -1, -1, 1};
  const double moran_checker = morans_i_statistic(checker, row_standardize(rook_grid(2, 2)));
  SpatialField field;
  field.adjacency = row_standardize(rook_grid(5, 6));
  rnd::Engine frng(9);
  for (std::size_t i = 0; i < 30; ++i) {
    field.ids.push_back(std::to_string(i));
    field.values.push_back(rnd::normal(frng));
  }
  const auto moran = morans_i(field, 1000, 4);
  const double perm_gap = std::fabs(moran.perm_mean - (-1.0 / 29.0));

  rnd::Engine mrng(21);
  double worst_metric = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 3 + rnd::uniform_index(mrng, 40);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = std::round(rnd::normal(mrng) * 3) / 3;
      y[i] = x[i] + rnd::normal(mrng);
    }
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) x[0] += 1;
    double se = 0;
    for (std::size_t i = 0; i < n; ++i) se += (x[i] - y[i]) * (x[i] - y[i]);
    worst_metric = std::max({worst_metric, std::fabs(train::metric_rmse(x, y) - std::sqrt(se / static_cast<double>(n))),
                             std::fabs(train::metric_pcc(x, y) - brute_pcc(x, y)),
                             std::fabs(train::metric_scc(x, y) - brute_pcc(brute_ranks(x), brute_ranks(y)))});
  }

  const bool ok = exact_ok && worst_route < 0.02 && bh_ok && std::fabs(moran_checker + 1.0) < 1e-12 &&
                  perm_gap < 0.05 && worst_metric < 1e-12;
  verdict(4, "statistics oracles", ok,
          fmt::format("exact p {:.6f}; 6+6 route gap {:.4f}; BH fixtures {}; checkerboard I {:.3f}; "
                      "permutation mean gap {:.4f}; metric max |diff| {:.1e}",
                      p_exact, worst_route, bh_ok ? "ok" : "mismatch", moran_checker, perm_gap, worst_metric));
}

// --- 5, 6, 7 -----------------------------------------------------------------

struct Outcome {
  json report;
  bool split_ok = false;
  std::string split_detail;
  bool learn_ok = false;
  std::string learn_detail;
  double learn_seconds = 0.0;
  bool attention_ok = false;
  std::string attention_detail;
};

std::set<std::string> id_set(const data::ResponseTable& t, const std::vector<std::size_t>& rows, bool cell) {
  std::set<std::string> out;
  for (auto i : rows) out.insert(cell ? t.rows[i].cell_id : t.rows[i].drug_id);
  return out;
}

bool disjoint(const std::set<std::string>& a, const std::set<std::string>& b) {
  return std::none_of(a.begin(), a.end(), [&](const std::string& x) { return b.count(x) > 0; });
}

void split_protocol(const data::ResponseTable& t, Outcome& out) {
  using train::SplitMode;
  json rep = json::array();
  std::size_t bad = 0;
  const std::size_t n = t.rows.size();
  for (auto mode : {SplitMode::kRandom, SplitMode::kCellBlind, SplitMode::kDrugBlind, SplitMode::kDisjoint}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      train::SplitSpec spec;
      spec.mode = mode;
      spec.seed = seed;
      const auto s = train::make_split(t, spec);
      std::vector<std::size_t> all = s.train;
      all.insert(all.end(), s.val.begin(), s.val.end());
      all.insert(all.end(), s.test.begin(), s.test.end());
      std::sort(all.begin(), all.end());
      bool ok = std::adjacent_find(all.begin(), all.end()) == all.end() && all.size() + s.dropped == n &&
                !s.train.empty() && !s.test.empty();
      const bool cells = mode == SplitMode::kCellBlind || mode == SplitMode::kDisjoint;
      const bool drugs = mode == SplitMode::kDrugBlind || mode == SplitMode::kDisjoint;
      for (bool cell : {true, false}) {
        if (!(cell ? cells : drugs)) continue;
        const auto tr = id_set(t, s.train, cell), va = id_set(t, s.val, cell), te = id_set(t, s.test, cell);
        ok = ok && disjoint(tr, va) && disjoint(tr, te) && disjoint(va, te);
      }
      if (mode == SplitMode::kRandom) {
        auto near = [](std::size_t got, double want) { return std::fabs(static_cast<double>(got) - want) <= 1.0; };
        ok = ok && s.dropped == 0 && near(s.train.size(), 0.6 * n) && near(s.val.size(), 0.2 * n) &&
             near(s.test.size(), 0.2 * n);
      }
      bad += !ok;
      rep.push_back({{"mode", train::to_string(mode)}, {"seed", seed}, {"train", s.train.size()},
                     {"val", s.val.size()}, {"test", s.test.size()}, {"dropped", s.dropped},
                     {"digest", digest(s.train) + digest(s.val) + digest(s.test)}});
    }
  }

  std::size_t fixed_bad = 0;
  for (auto mode : {SplitMode::kRandom, SplitMode::kCellBlind, SplitMode::kDrugBlind, SplitMode::kDisjoint}) {
    train::SplitSpec spec;
    spec.mode = mode;
    spec.fixed_test = true;
    spec.test_seed = 99;
    const auto first = train::make_split(t, spec);
    for (std::uint64_t seed = 1; seed < 5; ++seed) {
      spec.seed = seed;
      fixed_bad += train::make_split(t, spec).test != first.test;
    }
  }
  out.report["splits"] = rep;
  out.split_ok = bad == 0 && fixed_bad == 0;
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  out.split_detail = fmt::format("{} cells x {} drugs, 20 mode/seed splits with {} violations; fixed test "
                                 "changed in {} of 16 reseeds",
                                 id_set(t, rows, true).size(), id_set(t, rows, false).size(), bad, fixed_bad);
}

Outcome run_pipeline(std::size_t threads) {
  Outcome out;
  const synth::SynthConfig sc;  // seed 0, defaults
  const auto s = synth::generate(sc);
  split_protocol(s.responses, out);

  const auto t0 = Clock::now();
  const auto prepared = pipeline::prepare_drugs(s.drugs);
  embed::EmbeddingConfig ec;
  ec.mode = embed::Mode::kHashed;
  const auto ds = pipeline::build_dataset(data::zscore_normalize(s.expression), s.pathways, prepared.drugs,
                                          s.responses, ec);

  train::RunConfig rc;
  rc.threads = threads;
  std::vector<double> pcc;
  model::ModelParams random_best;
  model::ModelConfig filled;
  for (const char* mode : {"random", "disjoint"}) {
    train::SplitSpec spec;
    spec.mode = train::parse_split_mode(mode);
    const auto split = train::make_split(ds.responses(), spec);
    const auto result = train::train(ds, split, rc);
    const auto test = train::evaluate(result.best, ds, split.test, threads);
    auto rj = train::to_json(train::make_report(mode, spec, split, rc, result, test));
    rj["params_digest"] = digest(result.best);
    out.report["runs"].push_back(rj);
    pcc.push_back(test.pcc);
    if (spec.mode == train::SplitMode::kRandom) {
      random_best = result.best;
      filled = result.best.config;
    }
  }
  out.learn_seconds = seconds_since(t0);
  out.learn_ok = pcc[0] >= 0.85 && pcc[1] >= 0.3 && out.learn_seconds < 300.0;
  out.learn_detail =
      fmt::format("random PCC {:.4f} (>= 0.85), disjoint PCC {:.4f} (>= 0.3), {:.1f}s", pcc[0], pcc[1], out.learn_seconds);

  // Driver fragment attention in the sensitive regime.
  auto driver_wins = [&](const model::ModelParams& params) {
    std::size_t hit = 0, total = 0;
    for (const auto& pr : ds.pairs) {
      if (!s.drug_has_driver(pr.drug) || !s.cell_sensitive(pr.cell)) continue;
      model::AttentionRecord rec;
      model::predict(params, ds.path[pr.cell], ds.drug[pr.drug], ds.sub[pr.drug], &rec);
      const auto& net = rec.path2sub.net;
      double drv = 0, other = 0;
      std::size_t nd = 0, no = 0;
      for (std::size_t k = 0; k < net.cols(); ++k) {
        double col = 0;
        for (std::size_t p = 0; p < net.rows(); ++p) col += net(p, k);
        col /= static_cast<double>(net.rows());
        if (s.drug_fragments[pr.drug][k] == s.driver_fragment) {
          drv += col;
          ++nd;
        } else {
          other += col;
          ++no;
        }
      }
      hit += no == 0 || drv / static_cast<double>(nd) > other / static_cast<double>(no);
      ++total;
    }
    return std::pair{hit, total};
  };
  const auto [hit, total] = driver_wins(random_best);
  const auto [base_hit, base_total] =
      driver_wins(model::ModelParams::init(filled, rc.seed + train::kInitSeedOffset));
  const double rate = total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
  const double base = base_total ? static_cast<double>(base_hit) / static_cast<double>(base_total) : 0.0;
  out.report["attention"] = {{"pairs", total}, {"driver_wins", hit}, {"untrained_wins", base_hit}};
  out.attention_ok = total > 0 && rate >= 0.8;
  out.attention_detail = fmt::format("driver fragment leads in {}/{} sensitive pairs ({:.1f}%, >= 80%); "
                                     "untrained model {:.1f}%",
                                     hit, total, 100.0 * rate, 100.0 * base);
  return out;
}

}  // namespace

int main() {
  try {
    gradient_suite();
    attention_reduction();
    chemistry_corpus();
    statistics_oracles();

    const auto first = run_pipeline(1);
    verdict(5, "split protocol", first.split_ok, first.split_detail);
    verdict(6, "synthetic end-to-end learning", first.learn_ok, first.learn_detail);
    verdict(7, "interpretability recovery", first.attention_ok, first.attention_detail);

    const auto second = run_pipeline(2);
    const auto a = first.report.dump(2), b = second.report.dump(2);
    verdict(8, "determinism", a == b,
            fmt::format("rerun with 2 threads: reports {} ({} bytes, digest {})", a == b ? "identical" : "differ",
                        a.size(), hash::to_hex(hash::hash_bytes(a))));
  } catch (const std::exception& e) {
    std::printf("FAIL aborted: %s\n", e.what());
    return 1;
  }
  return g_failures == 0 ? 0 : 1;
}
