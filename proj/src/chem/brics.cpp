#include "dispa/chem/brics.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "dispa/util/hash.hpp"

namespace dispa::chem {
namespace {

struct Nbr {
  std::size_t atom;
  const Bond* bond;
};

std::vector<Nbr> nbrs(const MolGraph& g, std::size_t i) {
  std::vector<Nbr> out;
  for (const auto& b : g.bonds) {
    if (b.a == i) out.push_back({b.b, &b});
    if (b.b == i) out.push_back({b.a, &b});
  }
  return out;
}

bool is(const Atom& a, std::string_view el, bool aromatic) { return a.element == el && a.aromatic == aromatic; }

bool atom_in_ring(const MolGraph& g, std::size_t i) {
  return std::any_of(g.bonds.begin(), g.bonds.end(),
                     [&](const Bond& b) { return b.in_ring && (b.a == i || b.b == i); });
}

bool single(const Bond& b) { return b.order == BondOrder::kSingle; }
bool aromatic_bond(const Bond& b) { return b.order == BondOrder::kAromatic; }

bool has_double_o(const MolGraph& g, std::size_t i) {
  for (const auto& n : nbrs(g, i)) {
    if (n.bond->order == BondOrder::kDouble && is(g.atoms[n.atom], "O", false)) return true;
  }
  return false;
}

int count_double_o(const MolGraph& g, std::size_t i) {
  int c = 0;
  for (const auto& n : nbrs(g, i)) {
    if (n.bond->order == BondOrder::kDouble && is(g.atoms[n.atom], "O", false)) ++c;
  }
  return c;
}

bool has_double(const MolGraph& g, std::size_t i) {
  for (const auto& n : nbrs(g, i)) {
    if (n.bond->order == BondOrder::kDouble) return true;
  }
  return false;
}

// SMARTS default bond between atoms: single or aromatic.
bool default_bond(const Bond& b) { return single(b) || aromatic_bond(b); }

template <class Pred>
bool any_nbr(const MolGraph& g, std::size_t i, Pred&& pred) {
  for (const auto& n : nbrs(g, i)) {
    if (pred(n)) return true;
  }
  return false;
}

// Two distinct neighbours satisfying p1 and p2 respectively.
template <class P1, class P2>
bool two_nbrs(const MolGraph& g, std::size_t i, P1&& p1, P2&& p2) {
  const auto ns = nbrs(g, i);
  for (std::size_t x = 0; x < ns.size(); ++x) {
    if (!p1(ns[x])) continue;
    for (std::size_t y = 0; y < ns.size(); ++y) {
      if (x != y && p2(ns[y])) return true;
    }
  }
  return false;
}

bool element_in(const Atom& a, std::initializer_list<std::string_view> els) {
  return std::find(els.begin(), els.end(), a.element) != els.end();
}

}  // namespace

std::string_view env_label(BricsEnv env) {
  switch (env) {
    case BricsEnv::L1: return "L1";
    case BricsEnv::L3: return "L3";
    case BricsEnv::L4: return "L4";
    case BricsEnv::L5: return "L5";
    case BricsEnv::L6: return "L6";
    case BricsEnv::L8: return "L8";
    case BricsEnv::L9: return "L9";
    case BricsEnv::L10: return "L10";
    case BricsEnv::L11: return "L11";
    case BricsEnv::L12: return "L12";
    case BricsEnv::L13: return "L13";
    case BricsEnv::L14: return "L14";
    case BricsEnv::L15: return "L15";
    case BricsEnv::L16: return "L16";
  }
  return "?";
}

bool matches_env(const MolGraph& g, std::size_t i, BricsEnv env) {
  const Atom& a = g.atoms[i];
  const std::size_t deg = g.degree(i);
  auto acyclic_single_to_carbon = [&](const Nbr& n) {
    return single(*n.bond) && !n.bond->in_ring && g.atoms[n.atom].element == "C";
  };
  switch (env) {
    case BricsEnv::L1:
      // [C;D3]([#0,#6,#7,#8])(=O)
      return is(a, "C", false) && deg == 3 && has_double_o(g, i) && any_nbr(g, i, [&](const Nbr& n) {
               return default_bond(*n.bond) && element_in(g.atoms[n.atom], {"C", "N", "O"});
             });
    case BricsEnv::L3:
      // [O;D2]-;!@[#0,#6,#1]
      return is(a, "O", false) && deg == 2 && any_nbr(g, i, acyclic_single_to_carbon);
    case BricsEnv::L4:
      // [C;!D1;!$(C=*)]-;!@[#6]
      return is(a, "C", false) && deg != 1 && !has_double(g, i) && any_nbr(g, i, acyclic_single_to_carbon);
    case BricsEnv::L5:
      // [N;!D1;!$(N=*);!$(N-[!#6;!#16;!#0;!#1]);!$([N;R]@[C;R]=O)]
      if (!is(a, "N", false) || deg == 1 || has_double(g, i)) return false;
      if (any_nbr(g, i, [&](const Nbr& n) {
            return single(*n.bond) && !element_in(g.atoms[n.atom], {"C", "S", "H"});
          })) {
        return false;
      }
      if (atom_in_ring(g, i) && any_nbr(g, i, [&](const Nbr& n) {
            return n.bond->in_ring && is(g.atoms[n.atom], "C", false) && atom_in_ring(g, n.atom) &&
                   has_double_o(g, n.atom);
          })) {
        return false;
      }
      return true;
    case BricsEnv::L6:
      // [C;D3;!R](=O)-;!@[#0,#6,#7,#8]
      return is(a, "C", false) && deg == 3 && !atom_in_ring(g, i) && has_double_o(g, i) &&
             any_nbr(g, i, [&](const Nbr& n) {
               return single(*n.bond) && !n.bond->in_ring && element_in(g.atoms[n.atom], {"C", "N", "O"});
             });
    case BricsEnv::L8:
      // [C;!R;!D1;!$(C!-*)]
      return is(a, "C", false) && !atom_in_ring(g, i) && deg != 1 &&
             !any_nbr(g, i, [&](const Nbr& n) { return !single(*n.bond); });
    case BricsEnv::L9: {
      // [n;+0;$(n(:[c,n,o,s]):[c,n,o,s])]
      auto arom = [&](const Nbr& n) {
        return aromatic_bond(*n.bond) && g.atoms[n.atom].aromatic && element_in(g.atoms[n.atom], {"C", "N", "O", "S"});
      };
      return is(a, "N", true) && a.formal_charge == 0 && two_nbrs(g, i, arom, arom);
    }
    case BricsEnv::L10:
      // [N;R;$(N(@C(=O))@[C,N,O,S])]
      return is(a, "N", false) && atom_in_ring(g, i) &&
             two_nbrs(
                 g, i,
                 [&](const Nbr& n) { return n.bond->in_ring && is(g.atoms[n.atom], "C", false) && has_double_o(g, n.atom); },
                 [&](const Nbr& n) {
                   return n.bond->in_ring && !g.atoms[n.atom].aromatic && element_in(g.atoms[n.atom], {"C", "N", "O", "S"});
                 });
    case BricsEnv::L11:
      // [S;D2](-;!@[#0,#6])
      return is(a, "S", false) && deg == 2 && any_nbr(g, i, acyclic_single_to_carbon);
    case BricsEnv::L12:
      // [S;D4]([#6,#0])(=O)(=O)
      return is(a, "S", false) && deg == 4 && count_double_o(g, i) >= 2 &&
             any_nbr(g, i, [&](const Nbr& n) { return default_bond(*n.bond) && g.atoms[n.atom].element == "C"; });
    case BricsEnv::L13:
      // [C;$(C(-;@[C,N,O,S])-;@[N,O,S])]
      return is(a, "C", false) &&
             two_nbrs(
                 g, i,
                 [&](const Nbr& n) {
                   return single(*n.bond) && n.bond->in_ring && !g.atoms[n.atom].aromatic &&
                          element_in(g.atoms[n.atom], {"C", "N", "O", "S"});
                 },
                 [&](const Nbr& n) {
                   return single(*n.bond) && n.bond->in_ring && !g.atoms[n.atom].aromatic &&
                          element_in(g.atoms[n.atom], {"N", "O", "S"});
                 });
    case BricsEnv::L14:
      // [c;$(c(:[c,n,o,s]):[n,o,s])]
      return is(a, "C", true) &&
             two_nbrs(
                 g, i,
                 [&](const Nbr& n) {
                   return aromatic_bond(*n.bond) && g.atoms[n.atom].aromatic &&
                          element_in(g.atoms[n.atom], {"C", "N", "O", "S"});
                 },
                 [&](const Nbr& n) {
                   return aromatic_bond(*n.bond) && g.atoms[n.atom].aromatic &&
                          element_in(g.atoms[n.atom], {"N", "O", "S"});
                 });
    case BricsEnv::L15: {
      // [C;$(C(-;@C)-;@C)]
      auto ring_c = [&](const Nbr& n) {
        return single(*n.bond) && n.bond->in_ring && is(g.atoms[n.atom], "C", false);
      };
      return is(a, "C", false) && two_nbrs(g, i, ring_c, ring_c);
    }
    case BricsEnv::L16: {
      // [c;$(c(:c):c)]
      auto arom_c = [&](const Nbr& n) { return aromatic_bond(*n.bond) && is(g.atoms[n.atom], "C", true); };
      return is(a, "C", true) && two_nbrs(g, i, arom_c, arom_c);
    }
  }
  return false;
}

const std::vector<BricsRule>& default_rules() {
  static const std::vector<BricsRule> rules = [] {
    using E = BricsEnv;
    const std::pair<E, E> pairs[] = {
        {E::L1, E::L3},   {E::L1, E::L5},   {E::L1, E::L10},  {E::L3, E::L4},   {E::L3, E::L13},
        {E::L3, E::L14},  {E::L3, E::L15},  {E::L3, E::L16},  {E::L4, E::L5},   {E::L4, E::L11},
        {E::L5, E::L12},  {E::L5, E::L14},  {E::L5, E::L16},  {E::L5, E::L13},  {E::L5, E::L15},
        {E::L6, E::L13},  {E::L6, E::L14},  {E::L6, E::L15},  {E::L6, E::L16},  {E::L8, E::L9},
        {E::L8, E::L10},  {E::L8, E::L13},  {E::L8, E::L14},  {E::L8, E::L15},  {E::L8, E::L16},
        {E::L9, E::L13},  {E::L9, E::L14},  {E::L9, E::L15},  {E::L9, E::L16},  {E::L10, E::L13},
        {E::L10, E::L14}, {E::L10, E::L15}, {E::L10, E::L16}, {E::L11, E::L13}, {E::L11, E::L14},
        {E::L11, E::L15}, {E::L11, E::L16}, {E::L13, E::L14}, {E::L13, E::L15}, {E::L13, E::L16},
        {E::L14, E::L14}, {E::L14, E::L15}, {E::L14, E::L16}, {E::L15, E::L16}, {E::L16, E::L16},
    };
    std::vector<BricsRule> out;
    for (auto [x, y] : pairs) {
      out.push_back(BricsRule{std::string(env_label(x)) + "-" + std::string(env_label(y)), x, y, BondOrder::kSingle});
    }
    return out;
  }();
  return rules;
}

std::vector<std::size_t> find_cleavable_bonds(const MolGraph& g, std::span<const BricsRule> rules) {
  // Environment membership is evaluated once per atom.
  constexpr std::size_t kEnvs = static_cast<std::size_t>(BricsEnv::L16) + 1;
  std::vector<std::array<bool, kEnvs>> env(g.atoms.size());
  for (std::size_t i = 0; i < g.atoms.size(); ++i) {
    for (std::size_t e = 0; e < kEnvs; ++e) env[i][e] = matches_env(g, i, static_cast<BricsEnv>(e));
  }
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < g.bonds.size(); ++k) {
    const Bond& b = g.bonds[k];
    if (b.in_ring) continue;
    for (const auto& r : rules) {
      if (b.order != r.bond_order || r.bond_order != BondOrder::kSingle) continue;
      const auto ea = static_cast<std::size_t>(r.env_a), eb = static_cast<std::size_t>(r.env_b);
      if ((env[b.a][ea] && env[b.b][eb]) || (env[b.a][eb] && env[b.b][ea])) {
        out.push_back(k);
        break;
      }
    }
  }
  return out;
}

std::vector<std::size_t> find_cleavable_bonds(const MolGraph& g) { return find_cleavable_bonds(g, default_rules()); }

std::vector<Fragment> fragment(const MolGraph& g, std::span<const BricsRule> rules) {
  const auto cut = find_cleavable_bonds(g, rules);
  std::vector<bool> is_cut(g.bonds.size(), false);
  for (auto k : cut) is_cut[k] = true;

  // union-find over the uncut bonds
  std::vector<std::size_t> parent(g.atoms.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t k = 0; k < g.bonds.size(); ++k) {
    if (is_cut[k]) continue;
    auto ra = find(g.bonds[k].a), rb = find(g.bonds[k].b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<Fragment> out;
  std::vector<std::size_t> slot(g.atoms.size(), SIZE_MAX);
  for (std::size_t i = 0; i < g.atoms.size(); ++i) {
    const auto r = find(i);
    if (slot[r] == SIZE_MAX) {
      slot[r] = out.size();
      out.emplace_back();
    }
    out[slot[r]].atoms.push_back(i);
  }
  for (auto k : cut) {
    ++out[slot[find(g.bonds[k].a)]].attachment_count;
    ++out[slot[find(g.bonds[k].b)]].attachment_count;
  }
  for (auto& f : out) f.smiles = canonical_smiles(g, f.atoms);
  return out;
}

std::vector<Fragment> fragment(const MolGraph& g) { return fragment(g, default_rules()); }

FeatureSet fingerprint(const MolGraph& g) {
  const std::size_t n = g.atoms.size();
  std::vector<std::vector<std::pair<std::size_t, int>>> adj(n);
  for (const auto& b : g.bonds) {
    adj[b.a].emplace_back(b.b, static_cast<int>(b.order));
    adj[b.b].emplace_back(b.a, static_cast<int>(b.order));
  }
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Atom& a = g.atoms[i];
    std::uint64_t h = hash::hash_bytes(a.element);
    h = hash::combine(h, a.aromatic ? 1U : 0U);
    h = hash::combine(h, static_cast<std::uint64_t>(a.formal_charge + 16));
    h = hash::combine(h, adj[i].size());
    ids[i] = h;
  }
  FeatureSet out(ids.begin(), ids.end());
  for (int radius = 1; radius <= 2; ++radius) {
    std::vector<std::uint64_t> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<std::pair<int, std::uint64_t>> env;
      for (auto [j, order] : adj[i]) env.emplace_back(order, ids[j]);
      std::sort(env.begin(), env.end());
      std::uint64_t h = hash::combine(static_cast<std::uint64_t>(radius), ids[i]);
      for (auto [order, id] : env) h = hash::combine(hash::combine(h, static_cast<std::uint64_t>(order)), id);
      next[i] = h;
    }
    ids = std::move(next);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

FeatureSet fragment_fingerprint(const Fragment& f) { return fingerprint(parse_smiles(f.smiles)); }

}  // namespace dispa::chem
