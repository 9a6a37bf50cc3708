#include "dispa/synth/generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "dispa/chem/brics.hpp"
#include "dispa/chem/smiles.hpp"
#include "dispa/util/csv.hpp"
#include "dispa/util/error.hpp"
#include "dispa/util/random.hpp"

namespace dispa::synth {
namespace {

// Ring substituents written from their attachment atom; '#' is the ring digit.
const std::vector<std::string> kSubstituents = {
    "c#ccccc#", "c#ccncc#", "c#ccsc#",         "c#cncnc#", "C#CCCCC#",
    "C#CCOCC#", "C#CCNCC#", "c#ccoc#",         "C#CCCC#",  "c#ccc9ccccc9c#",
};

// Aromatic cores with up to three attachment slots.
struct Core {
  std::string library_smiles;  // matches a substituent entry
  std::vector<std::string> templates;  // by substituent count, {0}{1}{2} are slots
};

const std::vector<Core> kCores = {
    {"c#ccccc#", {"c1({0})ccccc1", "c1({0})cc({1})ccc1", "c1({0})cc({1})cc({2})c1"}},
    {"c#ccncc#", {"c1({0})ccncc1", "c1({0})ccc({1})nc1", "c1({0})cc({1})nc({2})c1"}},
};

std::string with_digit(const std::string& s, char digit) {
  std::string out = s;
  std::replace(out.begin(), out.end(), '#', digit);
  return out;
}

std::string fill(std::string tpl, const std::vector<std::string>& parts) {
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::string key = "{" + std::to_string(i) + "}";
    tpl.replace(tpl.find(key), key.size(), parts[i]);
  }
  return tpl;
}

double sd(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

bool SynthData::drug_has_driver(std::size_t drug) const {
  const auto& f = drug_fragments.at(drug);
  return std::find(f.begin(), f.end(), driver_fragment) != f.end();
}

bool SynthData::cell_sensitive(std::size_t cell) const {
  return activity(cell, driver_pathway) > config.sensitive_activity;
}

SynthData generate(const SynthConfig& cfg) {
  if (cfg.n_cells < 5 || cfg.n_drugs < 5) throw Error("synth: need at least 5 cells and 5 drugs");
  if (cfg.min_pathway_genes == 0 || cfg.min_pathway_genes > cfg.max_pathway_genes || cfg.max_pathway_genes > cfg.n_genes) {
    throw Error("synth: invalid pathway size range");
  }
  if (cfg.n_pathways == 0) throw Error("synth: need at least one pathway");
  rnd::Engine rng(cfg.seed);
  SynthData out;
  out.config = cfg;

  // fragment library: canonical form of each substituent ring
  for (const auto& s : kSubstituents) out.fragment_library.push_back(chem::canonical_smiles(chem::parse_smiles(with_digit(s, '2'))));
  auto library_index = [&](const std::string& canon) -> std::size_t {
    auto it = std::find(out.fragment_library.begin(), out.fragment_library.end(), canon);
    if (it == out.fragment_library.end()) throw Error("synth: fragment '" + canon + "' outside the library");
    return static_cast<std::size_t>(it - out.fragment_library.begin());
  };
  const std::size_t n_frag = out.fragment_library.size();
  const std::size_t n_p = cfg.n_pathways;

  // driver: a substituent that is never a core
  std::vector<std::size_t> driver_choices;
  for (std::size_t f = 0; f < n_frag; ++f) {
    const bool is_core = std::any_of(kCores.begin(), kCores.end(),
                                     [&](const Core& c) { return with_digit(c.library_smiles, '2') == with_digit(kSubstituents[f], '2'); });
    if (!is_core) driver_choices.push_back(f);
  }
  out.driver_fragment = driver_choices[rnd::uniform_index(rng, driver_choices.size())];
  out.driver_pathway = rnd::uniform_index(rng, n_p);

  // drugs
  std::set<std::string> seen;
  while (out.drugs.size() < cfg.n_drugs) {
    const auto& core = kCores[rnd::uniform_index(rng, kCores.size())];
    const std::size_t n_sub = 1 + rnd::uniform_index(rng, 3);
    std::vector<std::size_t> subs;
    const bool driver = rnd::uniform01(rng) < cfg.driver_rate;
    if (driver) subs.push_back(out.driver_fragment);
    while (subs.size() < n_sub) {
      const auto f = rnd::uniform_index(rng, n_frag);
      if (f != out.driver_fragment) subs.push_back(f);
    }
    rnd::shuffle(subs, rng);
    std::vector<std::string> parts;
    for (auto f : subs) parts.push_back((kSubstituents[f][0] == 'c' ? "-" : "") + with_digit(kSubstituents[f], '2'));
    // aromatic-aliphatic bonds need no explicit symbol; naphthalene uses digit 9 internally
    const std::string smiles = fill(core.templates[n_sub - 1], parts);
    const auto g = chem::parse_smiles(smiles);
    const std::string canon = chem::canonical_smiles(g);
    if (!seen.insert(canon).second) continue;
    const auto frags = chem::fragment(g);
    if (frags.size() != n_sub + 1) throw Error("synth: unexpected fragmentation of " + smiles);
    std::vector<std::size_t> idx;
    for (const auto& f : frags) idx.push_back(library_index(f.smiles));
    const std::string id = "D" + std::string(out.drugs.size() < 9 ? "0" : "") + std::to_string(out.drugs.size() + 1);
    out.drugs.push_back({id, smiles});
    out.drug_fragments.push_back(std::move(idx));
  }

  // pathways and expression
  for (std::size_t g = 0; g < cfg.n_genes; ++g) out.expression.gene_ids.push_back("G" + std::to_string(g + 1));
  std::vector<std::vector<std::pair<std::size_t, double>>> loadings(cfg.n_genes);
  for (std::size_t p = 0; p < n_p; ++p) {
    const std::size_t size = cfg.min_pathway_genes + rnd::uniform_index(rng, cfg.max_pathway_genes - cfg.min_pathway_genes + 1);
    std::vector<std::size_t> genes(cfg.n_genes);
    std::iota(genes.begin(), genes.end(), 0);
    rnd::shuffle(genes, rng);
    genes.resize(size);
    data::Pathway pw{"PW" + std::to_string(p + 1), "synthetic pathway " + std::to_string(p + 1), {}};
    for (auto g : genes) {
      pw.genes.push_back(out.expression.gene_ids[g]);
      const double w = (rnd::uniform01(rng) < 0.5 ? -1.0 : 1.0) * (0.6 + 0.8 * rnd::uniform01(rng));
      loadings[g].emplace_back(p, w);
    }
    out.pathways.pathways.push_back(std::move(pw));
  }
  out.activity = ad::Matrix(cfg.n_cells, n_p);
  for (auto& a : out.activity.data()) a = rnd::normal(rng);
  out.expression.values.resize(cfg.n_cells * cfg.n_genes);
  for (std::size_t c = 0; c < cfg.n_cells; ++c) {
    out.expression.cell_ids.push_back("C" + std::string(c < 9 ? "0" : "") + std::to_string(c + 1));
    for (std::size_t g = 0; g < cfg.n_genes; ++g) {
      double x = 5.0 + 0.3 * rnd::normal(rng);
      for (auto [p, w] : loadings[g]) x += w * out.activity(c, p);
      out.expression.at(c, g) = x;
    }
  }

  // response model
  std::vector<double> beta(n_frag), u(n_p);
  ad::Matrix m(n_p, n_frag);
  for (auto& b : beta) b = 0.5 * rnd::normal(rng);
  for (auto& x : u) x = 0.5 * rnd::normal(rng);
  for (auto& x : m.data()) x = 0.3 * rnd::normal(rng);
  beta[out.driver_fragment] = cfg.driver_main;
  m(out.driver_pathway, out.driver_fragment) = cfg.driver_coupling;
  const double mu = 2.0;
  for (std::size_t c = 0; c < cfg.n_cells; ++c) {
    for (std::size_t d = 0; d < cfg.n_drugs; ++d) {
      double s = mu;
      for (std::size_t p = 0; p < n_p; ++p) s += u[p] * out.activity(c, p);
      for (auto f : out.drug_fragments[d]) {
        s += beta[f];
        for (std::size_t p = 0; p < n_p; ++p) s += out.activity(c, p) * m(p, f);
      }
      out.signal.push_back(s);
      out.responses.rows.push_back({out.expression.cell_ids[c], out.drugs[d].id, 0.0});
    }
  }
  out.noise_sd = cfg.noise_fraction * sd(out.signal);
  for (std::size_t i = 0; i < out.signal.size(); ++i) out.responses.rows[i].ln_ic50 = out.signal[i] + out.noise_sd * rnd::normal(rng);
  return out;
}

void write_files(const SynthData& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw Error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("expression.csv");
    data::write_expression(f, s.expression);
  }
  {
    auto f = open("pathways.gmt");
    data::write_pathways(f, s.pathways);
  }
  {
    auto f = open("responses.csv");
    data::write_responses(f, s.responses);
  }
  {
    auto f = open("drugs.csv");
    csv::write_row(f, {"drug_id", "smiles"});
    for (const auto& d : s.drugs) csv::write_row(f, {d.id, d.smiles});
  }
  {
    nlohmann::ordered_json j;
    j["seed"] = s.config.seed;
    j["driver_fragment"] = s.fragment_library[s.driver_fragment];
    j["driver_pathway"] = s.pathways.pathways[s.driver_pathway].id;
    j["noise_sd"] = s.noise_sd;
    j["fragment_library"] = s.fragment_library;
    std::vector<std::vector<double>> act;
    for (std::size_t c = 0; c < s.activity.rows(); ++c) act.emplace_back(s.activity.row(c).begin(), s.activity.row(c).end());
    j["activity"] = act;
    j["signal"] = s.signal;
    auto f = open("truth.json");
    f << j.dump(2) << '\n';
  }
}

}  // namespace dispa::synth
