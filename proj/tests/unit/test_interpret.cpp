#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dispa/analysis/interpret.hpp"
#include "dispa/pipeline/dataset.hpp"
#include "dispa/synth/generator.hpp"
#include "dispa/util/error.hpp"
#include "dispa/util/random.hpp"

using namespace dispa;
using namespace dispa::analysis;

namespace {

// Nested feature sets of sizes 1, 2, 5, 13, 34: every pairwise Tanimoto is distinct
// and equals exp(-|log s_i - log s_j|).
const std::vector<std::size_t> kSizes{1, 2, 5, 13, 34};

std::vector<chem::FeatureSet> nested_fingerprints() {
  std::vector<chem::FeatureSet> fp;
  for (auto n : kSizes) {
    chem::FeatureSet s(n);
    std::iota(s.begin(), s.end(), 0);
    fp.push_back(s);
  }
  return fp;
}

// Column angles 0.5 log s: cosine falls as the Tanimoto falls.
ad::Matrix log_angle_columns() {
  ad::Matrix m(2, kSizes.size());
  for (std::size_t j = 0; j < kSizes.size(); ++j) {
    const double a = 0.5 * std::log(static_cast<double>(kSizes[j]));
    m(0, j) = std::cos(a);
    m(1, j) = std::sin(a);
  }
  return m;
}

std::vector<UnitPrediction> preds(const std::vector<std::string>& units, const std::vector<std::string>& drugs,
                                  auto value) {
  std::vector<UnitPrediction> out;
  for (std::size_t u = 0; u < units.size(); ++u) {
    for (std::size_t d = 0; d < drugs.size(); ++d) out.push_back({units[u], drugs[d], value(u, d)});
  }
  return out;
}

}  // namespace

TEST_CASE("alignment of concordant similarities") {
  const auto r = substructure_alignment("x", nested_fingerprints(), log_angle_columns());
  CHECK(r.score == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.n_pairs == 10);
}

TEST_CASE("alignment rank reversal gives -1") {
  // three fragments: Tanimoto pairs (01, 02, 12) = (0.5, 0.2, 0.1); cosines reversed in rank
  std::vector<chem::FeatureSet> fp{{1, 2, 3}, {1, 2, 4, 5}, {2, 6, 7, 8, 9, 10, 11, 12}};
  // columns at angles giving cos(01) < cos(02) < cos(12)
  ad::Matrix m(2, 3);
  const double ang[3] = {0.0, 1.2, 0.8};
  for (std::size_t j = 0; j < 3; ++j) {
    m(0, j) = std::cos(ang[j]);
    m(1, j) = std::sin(ang[j]);
  }
  const auto r = substructure_alignment("x", fp, m);
  CHECK(r.score == doctest::Approx(-1.0));
}

TEST_CASE("alignment is invariant to consistent relabelling") {
  rnd::Engine rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 3 + rnd::uniform_index(rng, 5);
    std::vector<chem::FeatureSet> fp(n);
    ad::Matrix m(4, n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::uint64_t k = 0; k < 12; ++k) {
        if (rnd::uniform01(rng) < 0.5) fp[j].push_back(k);
      }
      if (fp[j].empty()) fp[j].push_back(99);
      for (std::size_t r = 0; r < 4; ++r) m(r, j) = rnd::uniform01(rng);
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rnd::shuffle(perm, rng);
    std::vector<chem::FeatureSet> fp2(n);
    ad::Matrix m2(4, n);
    for (std::size_t j = 0; j < n; ++j) {
      fp2[j] = fp[perm[j]];
      for (std::size_t r = 0; r < 4; ++r) m2(r, j) = m(r, perm[j]);
    }
    try {
      const double a = substructure_alignment("x", fp, m).score;
      CHECK(substructure_alignment("x", fp2, m2).score == doctest::Approx(a).epsilon(1e-12));
    } catch (const Error&) {
      CHECK_THROWS_AS(substructure_alignment("x", fp2, m2), Error);
    }
  }
}

TEST_CASE("alignment permutation null centres on zero") {
  const std::size_t n = kSizes.size();
  const auto fp = nested_fingerprints();
  const auto base = log_angle_columns();
  rnd::Engine rng(8);
  double sum = 0.0;
  const int reps = 1000;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rnd::shuffle(perm, rng);
    ad::Matrix m(2, n);
    for (std::size_t j = 0; j < n; ++j) {
      m(0, j) = base(0, perm[j]);
      m(1, j) = base(1, perm[j]);
    }
    sum += substructure_alignment("x", fp, m).score;
  }
  CHECK(std::fabs(sum / reps) < 0.1);
}

TEST_CASE("alignment preconditions") {
  const auto fp = nested_fingerprints();
  CHECK_THROWS_AS(substructure_alignment("x", {fp[0], fp[1]}, ad::Matrix(2, 2, 1.0)), Error);
  CHECK_THROWS_AS(substructure_alignment("x", fp, ad::Matrix(2, 3, 1.0)), ShapeError);
  CHECK_THROWS_AS(substructure_alignment("x", fp, ad::Matrix(2, 5, 1.0)), Error);
}

TEST_CASE("group-selective drugs") {
  std::vector<std::string> units;
  std::map<std::string, std::string> groups;
  for (int i = 0; i < 12; ++i) {
    units.push_back("u" + std::to_string(i));
    groups[units.back()] = i < 4 ? "A" : (i < 8 ? "B" : "C");
  }
  const std::vector<std::string> drugs{"d1", "d2", "d3"};

  SUBCASE("strictly lower in one group") {
    auto p = preds(units, drugs, [](std::size_t u, std::size_t d) {
      return d == 0 && u < 4 ? -5.0 + 0.1 * static_cast<double>(u) : static_cast<double>((u * 7 + d * 3) % 5);
    });
    auto res = group_selective_drugs(p, groups, 0.05);
    CHECK(res.size() == 9);
    for (const auto& r : res) {
      CHECK(r.p_adjusted >= r.p_raw);
      CHECK(r.p_adjusted <= 1.0);
      CHECK(r.group_b == "rest");
      CHECK(r.selective == (r.group_a == "A" && r.drug_id == "d1"));
    }
    auto overlap = selective_overlap(res);
    REQUIRE(overlap.size() == 1);
    CHECK(overlap.begin()->first == std::vector<std::string>{"A"});
    CHECK(overlap.begin()->second == 1);
    auto a = std::find_if(res.begin(), res.end(), [](auto& r) { return r.group_a == "A" && r.drug_id == "d1"; });
    CHECK(a->delta < 0);
    CHECK(a->n_a == 4);
    CHECK(a->n_b == 8);

    auto pw = group_selective_drugs(p, groups, 0.05, GroupContrast::kPairwise);
    CHECK(pw.size() == 18);
  }

  SUBCASE("no effect") {
    auto p = preds(units, drugs, [](std::size_t, std::size_t d) { return static_cast<double>(d); });
    for (const auto& r : group_selective_drugs(p, groups, 0.05)) CHECK_FALSE(r.selective);
  }

  SUBCASE("degenerate groups") {
    std::map<std::string, std::string> one;
    for (auto& u : units) one[u] = "A";
    auto p = preds(units, drugs, [](std::size_t u, std::size_t) { return static_cast<double>(u); });
    CHECK_THROWS_AS(group_selective_drugs(p, one), Error);
    auto lonely = groups;
    lonely["u0"] = "Z";
    CHECK_THROWS_AS(group_selective_drugs(p, lonely), Error);
  }

  SUBCASE("permuted labels keep false selections rare") {
    rnd::Engine rng(17);
    std::vector<std::string> many;
    std::map<std::string, std::string> base;
    for (int i = 0; i < 30; ++i) {
      many.push_back("s" + std::to_string(i));
      base[many.back()] = "g" + std::to_string(i % 3);
    }
    std::vector<std::string> dd;
    for (int d = 0; d < 10; ++d) dd.push_back("d" + std::to_string(d));
    std::vector<double> values;
    for (std::size_t i = 0; i < many.size() * dd.size(); ++i) values.push_back(rnd::normal(rng));
    auto p = preds(many, dd, [&](std::size_t u, std::size_t d) { return values[u * dd.size() + d]; });
    std::size_t selected = 0, tested = 0;
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<std::string> labels;
      for (auto& [u, g] : base) labels.push_back(g);
      rnd::shuffle(labels, rng);
      std::map<std::string, std::string> perm;
      std::size_t k = 0;
      for (auto& [u, g] : base) perm[u] = labels[k++];
      for (const auto& r : group_selective_drugs(p, perm, 0.05)) {
        selected += r.selective;
        ++tested;
      }
    }
    CHECK(static_cast<double>(selected) / static_cast<double>(tested) <= 0.1);
  }
}

TEST_CASE("attention export on a synthetic model") {
  synth::SynthConfig sc;
  sc.n_cells = 6;
  sc.n_drugs = 5;
  sc.n_genes = 15;
  sc.n_pathways = 3;
  sc.min_pathway_genes = 3;
  sc.max_pathway_genes = 4;
  auto s = synth::generate(sc);
  embed::EmbeddingConfig ec;
  ec.mode = embed::Mode::kHashed;
  ec.dim = 8;
  auto prepared = pipeline::prepare_drugs(s.drugs);
  auto data = pipeline::build_dataset(data::zscore_normalize(s.expression), s.pathways, prepared.drugs, s.responses, ec);
  model::ModelConfig mc;
  mc.n_p = data.n_p();
  mc.n_g = data.n_g();
  mc.d_e = data.d_e();
  mc.d_a = 4;
  mc.heads = 2;
  auto params = model::ModelParams::init(mc, 3);
  std::vector<std::size_t> pairs(data.pairs.size());
  std::iota(pairs.begin(), pairs.end(), 0);
  auto recs = export_attention(params, data, pairs);
  REQUIRE(recs.size() == pairs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& p = data.pairs[i];
    const auto& r = recs[i];
    CHECK(r.cell_id == data.cell_ids[p.cell]);
    CHECK(r.path2sub.net.rows() == data.n_p());
    CHECK(r.path2sub.net.cols() == data.sub[p.drug].rows());
    for (std::size_t q = 0; q < r.path2sub.net.rows(); ++q) {
      double s1 = 0, s2 = 0, net = 0;
      for (std::size_t k = 0; k < r.path2sub.net.cols(); ++k) {
        s1 += r.path2sub.softmax1(q, k);
        s2 += r.path2sub.softmax2(q, k);
        net += r.path2sub.net(q, k);
      }
      CHECK(std::fabs(s1 - 1.0) < 1e-9);
      CHECK(std::fabs(s2 - 1.0) < 1e-9);
      CHECK(std::fabs(net - (1.0 - r.path2sub.lambda)) < 1e-9);
    }
  }
  CHECK_THROWS_AS(export_attention(params, data, {data.pairs.size()}), Error);

  std::ostringstream csv_out, json_out;
  std::vector<std::string> pw;
  for (const auto& p : s.pathways.pathways) pw.push_back(p.id);
  write_attention_csv(csv_out, {recs[0]}, pw);
  const std::string text = csv_out.str();
  const auto lines = std::count(text.begin(), text.end(), '\n');
  CHECK(lines == 1 + static_cast<long>(data.n_p() * recs[0].path2sub.net.cols() + data.n_p()));
  write_attention_json(json_out, {recs[0]}, pw);
  CHECK(json_out.str().find("\"path2sub\"") != std::string::npos);

  std::vector<const model::AttentionRecord*> same_drug;
  for (const auto& r : recs) {
    if (r.drug_id == recs[0].drug_id) same_drug.push_back(&r);
  }
  auto mean = mean_path2sub(same_drug);
  CHECK(mean.cols() == recs[0].path2sub.net.cols());
}
