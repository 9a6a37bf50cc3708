#include <cmath>
#include <functional>
#include <iostream>
#include <numeric>

#include <spdlog/spdlog.h>

#include "common.hpp"
#include "dispa/analysis/stats.hpp"
#include "dispa/chem/brics.hpp"
#include "dispa/train/metrics.hpp"
#include "dispa/util/error.hpp"
#include "dispa/util/random.hpp"

namespace dispa::cli {
namespace {

ad::Matrix random_matrix(rnd::Engine& rng, std::size_t r, std::size_t c) {
  ad::Matrix m(r, c);
  for (auto& v : m.data()) v = rnd::normal(rng);
  return m;
}

model::ModelConfig small_config() {
  model::ModelConfig c;
  c.n_p = 3;
  c.n_g = 4;
  c.d_e = 8;
  c.d_a = 4;
  return c;
}

bool model_gradients() {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    rnd::Engine rng(seed);
    const auto c = small_config();
    const auto params = model::ModelParams::init(c, seed);
    const auto path = random_matrix(rng, c.n_p, c.n_g), drug = random_matrix(rng, 1, c.d_e), sub = random_matrix(rng, 3, c.d_e);
    std::vector<ad::Matrix> point(params.tensors.begin(), params.tensors.end());
    const auto f = [&](ad::Tape& t, std::span<const ad::Tensor> x) {
      model::BoundParams b;
      b.config = &params.config;
      for (std::size_t i = 0; i < model::kParamCount; ++i) b.t[i] = x[i];
      const auto r = model::forward(b, t.constant(path), t.constant(drug), t.constant(sub));
      return ad::mse(r.prediction, t.constant(ad::Matrix(1, 1, 0.5)));
    };
    const auto res = ad::grad_check(f, point);
    if (!res.skipped && res.max_rel_error >= 1e-4) return false;
  }
  return true;
}

bool attention_rows() {
  rnd::Engine rng(7);
  for (double lambda : {0.0, 0.3, 0.9}) {
    auto c = small_config();
    c.lambda_override = lambda;
    const auto params = model::ModelParams::init(c, 2);
    model::AttentionRecord rec;
    model::predict(params, random_matrix(rng, c.n_p, c.n_g), random_matrix(rng, 1, c.d_e), random_matrix(rng, 4, c.d_e), &rec);
    for (std::size_t q = 0; q < rec.path2sub.net.rows(); ++q) {
      const auto row = rec.path2sub.net.row(q);
      if (std::fabs(std::accumulate(row.begin(), row.end(), 0.0) - (1.0 - lambda)) > 1e-9) return false;
    }
  }
  return true;
}

bool statistics() {
  const std::vector<double> a{1, 2}, b{3, 4};
  if (std::fabs(analysis::wilcoxon_rank_sum(a, b).p - 1.0 / 6.0) > 1e-12) return false;
  const auto adj = analysis::bh_fdr(std::vector<double>{0.01, 0.04});
  if (std::fabs(adj[0] - 0.02) > 1e-12 || std::fabs(adj[1] - 0.04) > 1e-12) return false;
  const std::vector<double> board{1, -1, -1, 1};
  if (std::fabs(analysis::morans_i_statistic(board, analysis::rook_grid(2, 2)) + 1.0) > 1e-12) return false;
  return std::fabs(train::metric_rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}) - std::sqrt(12.5)) < 1e-12 &&
         std::fabs(train::metric_scc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}) - 0.5) < 1e-12;
}

bool chemistry() {
  for (const char* s : {"CC(=O)Oc1ccccc1C(=O)O", "CN1CCN(CC1)c1ccc(cc1)C(=O)Nc1ccccc1", "c1ccc2ccccc2c1", "OC(=O)C1CC1"}) {
    const auto g = chem::parse_smiles(s);
    const auto again = chem::parse_smiles(chem::write_smiles(g));
    if (chem::canonical_smiles(g) != chem::canonical_smiles(again)) return false;
    std::vector<int> owner(g.atoms.size(), 0);
    for (const auto& f : chem::fragment(g)) {
      for (auto a : f.atoms) ++owner[a];
    }
    for (int n : owner) {
      if (n != 1) return false;
    }
  }
  return chem::fragment(chem::parse_smiles("CC(=O)Oc1ccccc1C(=O)O")).size() == 4;
}

void run_selftest(const Context& ctx) {
  begin(ctx, "selftest");
  const std::vector<std::pair<const char*, std::function<bool()>>> checks{
      {"model gradients match finite differences", model_gradients},
      {"net attention rows sum to 1 - lambda", attention_rows},
      {"statistics fixtures", statistics},
      {"parser round trip and fragment partition", chemistry},
  };
  std::size_t failed = 0;
  for (const auto& [name, check] : checks) {
    bool ok = false;
    try {
      ok = check();
    } catch (const std::exception& e) {
      spdlog::error("{}: {}", name, e.what());
    }
    std::cout << (ok ? "PASS " : "FAIL ") << name << '\n';
    failed += !ok;
  }
  if (failed) throw Error(std::to_string(failed) + " selftest check(s) failed");
}

}  // namespace

void add_selftest_command(CLI::App& app, Context& ctx) {
  auto* s = app.add_subcommand("selftest", "Run the built-in oracle and property checks");
  s->callback([&ctx] { run_selftest(ctx); });
}

}  // namespace dispa::cli
