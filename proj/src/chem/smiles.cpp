#include "dispa/chem/smiles.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <tuple>

namespace dispa::chem {
namespace {

constexpr std::array<std::string_view, 118> kElements = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",
    "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn",
    "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh",
    "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd",
    "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re",
    "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db",
    "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

bool is_element(std::string_view s) {
  return std::find(kElements.begin(), kElements.end(), s) != kElements.end();
}

bool is_organic(std::string_view s) {
  return s == "B" || s == "C" || s == "N" || s == "O" || s == "P" || s == "S" || s == "F" ||
         s == "Cl" || s == "Br" || s == "I";
}

bool is_aromatic_organic(std::string_view s) {
  return s == "b" || s == "c" || s == "n" || s == "o" || s == "p" || s == "s";
}

// Aromatic symbols allowed inside brackets.
bool is_aromatic_bracket(std::string_view s) {
  return is_aromatic_organic(s) || s == "se" || s == "as" || s == "te";
}

std::string capitalise(std::string_view s) {
  std::string out(s);
  out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

struct BracketAtom {
  Atom atom;
  bool had_stereo = false;
  bool had_isotope = false;
};

BracketAtom parse_bracket(std::string_view text, std::size_t offset) {
  // text includes the surrounding brackets
  BracketAtom out;
  std::size_t i = 1;
  const std::size_t end = text.size() - 1;
  auto fail = [&](const std::string& what) -> SmilesError {
    return SmilesError(offset + i, "bracket atom: " + what);
  };
  auto digit = [&](std::size_t k) { return k < end && std::isdigit(static_cast<unsigned char>(text[k])); };

  if (digit(i)) {
    out.had_isotope = true;
    while (digit(i)) ++i;
  }
  if (i >= end) throw fail("missing element symbol");
  // Element symbol: aromatic two-letter, aromatic one-letter, then capitalised.
  std::string_view sym;
  if (std::islower(static_cast<unsigned char>(text[i]))) {
    if (i + 1 < end && is_aromatic_bracket(text.substr(i, 2))) {
      sym = text.substr(i, 2);
    } else if (is_aromatic_bracket(text.substr(i, 1))) {
      sym = text.substr(i, 1);
    } else {
      throw fail("unknown aromatic symbol");
    }
    out.atom.aromatic = true;
    out.atom.element = capitalise(sym);
  } else if (std::isupper(static_cast<unsigned char>(text[i]))) {
    if (i + 1 < end && std::islower(static_cast<unsigned char>(text[i + 1])) && is_element(text.substr(i, 2))) {
      sym = text.substr(i, 2);
    } else if (is_element(text.substr(i, 1))) {
      sym = text.substr(i, 1);
    } else {
      throw fail("unknown element");
    }
    out.atom.element = std::string(sym);
  } else {
    throw fail("unexpected character '" + std::string(1, text[i]) + "'");
  }
  i += sym.size();

  if (i < end && text[i] == '@') {
    out.had_stereo = true;
    ++i;
    if (i < end && text[i] == '@') {
      ++i;
    } else {
      // @TH1, @AL2, @SP3, @TB10, @OH25
      if (i + 1 < end && std::isupper(static_cast<unsigned char>(text[i])) &&
          std::isupper(static_cast<unsigned char>(text[i + 1]))) {
        const auto cls = text.substr(i, 2);
        if (cls != "TH" && cls != "AL" && cls != "SP" && cls != "TB" && cls != "OH") {
          throw fail("unknown chirality class");
        }
        i += 2;
        if (!digit(i)) throw fail("chirality class needs a number");
        while (digit(i)) ++i;
      }
    }
  }

  int h = 0;
  if (i < end && text[i] == 'H') {
    ++i;
    h = 1;
    if (digit(i)) {
      h = text[i] - '0';
      ++i;
    }
  }
  out.atom.explicit_h = h;

  if (i < end && (text[i] == '+' || text[i] == '-')) {
    const char sign = text[i];
    const int unit = sign == '+' ? 1 : -1;
    ++i;
    int charge = unit;
    if (digit(i)) {
      int mag = 0;
      while (digit(i)) {
        mag = mag * 10 + (text[i] - '0');
        ++i;
        if (mag > 15) throw fail("charge out of range");
      }
      charge = unit * mag;
    } else {
      while (i < end && text[i] == sign) {
        charge += unit;
        ++i;
      }
    }
    out.atom.formal_charge = charge;
  }

  if (i < end && text[i] == ':') {
    ++i;
    if (!digit(i)) throw fail("atom class needs a number");
    while (digit(i)) ++i;
  }
  if (i != end) throw fail("unexpected trailing '" + std::string(text.substr(i, end - i)) + "'");
  return out;
}

BondOrder order_from_symbol(char c) {
  switch (c) {
    case '=':
      return BondOrder::kDouble;
    case '#':
      return BondOrder::kTriple;
    case ':':
      return BondOrder::kAromatic;
    default:
      return BondOrder::kSingle;
  }
}

struct Adjacency {
  explicit Adjacency(const MolGraph& g) : lists(g.atoms.size()) {
    for (std::size_t k = 0; k < g.bonds.size(); ++k) {
      lists[g.bonds[k].a].emplace_back(g.bonds[k].b, k);
      lists[g.bonds[k].b].emplace_back(g.bonds[k].a, k);
    }
    for (auto& l : lists) std::sort(l.begin(), l.end());
  }
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> lists;
};

std::vector<std::size_t> component_labels(const MolGraph& g, std::size_t* count) {
  const Adjacency adj(g);
  std::vector<std::size_t> label(g.atoms.size(), SIZE_MAX);
  std::size_t n = 0;
  for (std::size_t s = 0; s < g.atoms.size(); ++s) {
    if (label[s] != SIZE_MAX) continue;
    std::vector<std::size_t> stack{s};
    label[s] = n;
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (auto [v, k] : adj.lists[u]) {
        if (label[v] == SIZE_MAX) {
          label[v] = n;
          stack.push_back(v);
        }
      }
    }
    ++n;
  }
  if (count) *count = n;
  return label;
}

using BitRow = std::vector<std::uint64_t>;

BitRow to_bits(const std::vector<std::size_t>& bond_ids, std::size_t nbonds) {
  BitRow row((nbonds + 63) / 64, 0);
  for (auto k : bond_ids) row[k / 64] ^= (std::uint64_t{1} << (k % 64));
  return row;
}

// Orders the atoms of a simple cycle given as a bond set.
std::vector<std::size_t> cycle_atoms(const MolGraph& g, const std::vector<std::size_t>& bond_ids) {
  std::map<std::size_t, std::vector<std::size_t>> nbr;
  for (auto k : bond_ids) {
    nbr[g.bonds[k].a].push_back(g.bonds[k].b);
    nbr[g.bonds[k].b].push_back(g.bonds[k].a);
  }
  std::vector<std::size_t> out;
  const std::size_t start = nbr.begin()->first;
  std::size_t prev = SIZE_MAX, cur = start;
  do {
    out.push_back(cur);
    const auto& n = nbr[cur];
    const std::size_t next = (n[0] != prev) ? n[0] : n[1];
    prev = cur;
    cur = next;
  } while (cur != start && out.size() <= bond_ids.size());
  return out;
}

}  // namespace

SmilesError::SmilesError(std::size_t offset, const std::string& message)
    : Error("SMILES error at offset " + std::to_string(offset) + ": " + message), offset_(offset) {}

std::vector<std::pair<std::size_t, std::size_t>> MolGraph::neighbors(std::size_t atom) const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t k = 0; k < bonds.size(); ++k) {
    if (bonds[k].a == atom) out.emplace_back(bonds[k].b, k);
    if (bonds[k].b == atom) out.emplace_back(bonds[k].a, k);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t MolGraph::degree(std::size_t atom) const {
  return static_cast<std::size_t>(
      std::count_if(bonds.begin(), bonds.end(), [&](const Bond& b) { return b.a == atom || b.b == atom; }));
}

std::optional<std::size_t> MolGraph::bond_between(std::size_t x, std::size_t y) const {
  for (std::size_t k = 0; k < bonds.size(); ++k) {
    if ((bonds[k].a == x && bonds[k].b == y) || (bonds[k].a == y && bonds[k].b == x)) return k;
  }
  return std::nullopt;
}

std::size_t MolGraph::component_count() const {
  std::size_t n = 0;
  component_labels(*this, &n);
  return n;
}

std::vector<Token> tokenize_smiles(std::string_view input) {
  if (input.empty()) throw SmilesError(0, "empty input");
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < input.size()) {
    const char c = input[i];
    const auto uc = static_cast<unsigned char>(c);
    if (uc >= 0x80) throw SmilesError(i, "non-ASCII byte");
    if (c == 'C' && i + 1 < input.size() && input[i + 1] == 'l') {
      out.push_back({TokenKind::kAtom, "Cl", i});
      i += 2;
    } else if (c == 'B' && i + 1 < input.size() && input[i + 1] == 'r') {
      out.push_back({TokenKind::kAtom, "Br", i});
      i += 2;
    } else if (is_organic(std::string_view(&input[i], 1)) || is_aromatic_organic(std::string_view(&input[i], 1))) {
      out.push_back({TokenKind::kAtom, std::string(1, c), i});
      ++i;
    } else if (c == '[') {
      const auto close = input.find(']', i);
      if (close == std::string_view::npos) throw SmilesError(i, "unterminated bracket atom");
      const auto inner_open = input.find('[', i + 1);
      if (inner_open != std::string_view::npos && inner_open < close) {
        throw SmilesError(inner_open, "nested '[' in bracket atom");
      }
      for (std::size_t k = i + 1; k < close; ++k) {
        if (static_cast<unsigned char>(input[k]) >= 0x80 || std::isspace(static_cast<unsigned char>(input[k]))) {
          throw SmilesError(k, "illegal character in bracket atom");
        }
      }
      out.push_back({TokenKind::kBracketAtom, std::string(input.substr(i, close - i + 1)), i});
      i = close + 1;
    } else if (c == '-' || c == '=' || c == '#' || c == ':' || c == '/' || c == '\\') {
      out.push_back({TokenKind::kBond, std::string(1, c), i});
      ++i;
    } else if (c == '(') {
      out.push_back({TokenKind::kBranchOpen, "(", i});
      ++i;
    } else if (c == ')') {
      out.push_back({TokenKind::kBranchClose, ")", i});
      ++i;
    } else if (std::isdigit(uc)) {
      Token t{TokenKind::kRingClosure, std::string(1, c), i};
      t.ring_number = c - '0';
      out.push_back(t);
      ++i;
    } else if (c == '%') {
      if (i + 2 >= input.size() || !std::isdigit(static_cast<unsigned char>(input[i + 1])) ||
          !std::isdigit(static_cast<unsigned char>(input[i + 2]))) {
        throw SmilesError(i, "'%' must be followed by two digits");
      }
      Token t{TokenKind::kRingClosure, std::string(input.substr(i, 3)), i};
      t.ring_number = (input[i + 1] - '0') * 10 + (input[i + 2] - '0');
      out.push_back(t);
      i += 3;
    } else if (c == '.') {
      out.push_back({TokenKind::kDot, ".", i});
      ++i;
    } else {
      throw SmilesError(i, std::string("unexpected character '") + (std::isprint(uc) ? std::string(1, c) : "?") + "'");
    }
  }
  return out;
}

MolGraph parse_smiles(std::string_view input, const ParseOptions& options) {
  const auto tokens = tokenize_smiles(input);
  MolGraph g;
  g.source = std::string(input);

  struct OpenRing {
    std::size_t atom;
    std::optional<BondOrder> order;
    std::size_t offset;
  };
  std::map<int, OpenRing> open_rings;
  std::vector<std::size_t> branch_stack;
  std::vector<std::size_t> branch_offsets;
  std::optional<std::size_t> prev;
  std::optional<BondOrder> pending;
  std::size_t pending_offset = 0;
  bool warned_stereo = false, warned_isotope = false;
  bool saw_dot = false;
  bool last_was_branch_open = false;


  auto stereo_warning = [&] {
    if (!warned_stereo) {
      g.warnings.push_back("stereochemistry ignored");
      warned_stereo = true;
    }
  };

  auto add_bond = [&](std::size_t a, std::size_t b, std::optional<BondOrder> order, std::size_t offset) {
    if (a == b) throw SmilesError(offset, "ring closure to the same atom");
    if (g.bond_between(a, b)) throw SmilesError(offset, "duplicate bond between atoms");
    BondOrder o;
    if (order) {
      o = *order;
    } else {
      o = (g.atoms[a].aromatic && g.atoms[b].aromatic) ? BondOrder::kAromatic : BondOrder::kSingle;
    }
    g.bonds.push_back(Bond{a, b, o, false});
  };

  for (const auto& t : tokens) {
    switch (t.kind) {
      case TokenKind::kAtom:
      case TokenKind::kBracketAtom: {
        Atom atom;
        if (t.kind == TokenKind::kAtom) {
          atom.aromatic = std::islower(static_cast<unsigned char>(t.text[0])) != 0;
          atom.element = capitalise(t.text);
        } else {
          auto b = parse_bracket(t.text, t.offset);
          atom = std::move(b.atom);
          if (b.had_stereo) stereo_warning();
          if (b.had_isotope && !warned_isotope) {
            g.warnings.push_back("isotope labels ignored");
            warned_isotope = true;
          }
        }
        atom.index = g.atoms.size();
        g.atoms.push_back(std::move(atom));
        const auto idx = g.atoms.size() - 1;
        if (prev) add_bond(*prev, idx, pending, pending_offset);
        prev = idx;
        pending.reset();
        last_was_branch_open = false;
        break;
      }
      case TokenKind::kBond: {
        if (!prev) throw SmilesError(t.offset, "bond symbol without a preceding atom");
        if (pending) throw SmilesError(t.offset, "two consecutive bond symbols");
        if (t.text == "/" || t.text == "\\") stereo_warning();
        pending = order_from_symbol(t.text[0]);
        pending_offset = t.offset;
        break;
      }
      case TokenKind::kBranchOpen: {
        if (!prev) throw SmilesError(t.offset, "branch without a preceding atom");
        if (pending) throw SmilesError(t.offset, "bond symbol before '('");
        branch_stack.push_back(*prev);
        branch_offsets.push_back(t.offset);
        last_was_branch_open = true;
        break;
      }
      case TokenKind::kBranchClose: {
        if (branch_stack.empty()) throw SmilesError(t.offset, "unbalanced ')'");
        if (pending) throw SmilesError(t.offset, "bond symbol before ')'");
        if (last_was_branch_open) throw SmilesError(t.offset, "empty branch");
        prev = branch_stack.back();
        branch_stack.pop_back();
        branch_offsets.pop_back();
        break;
      }
      case TokenKind::kRingClosure: {
        if (!prev) throw SmilesError(t.offset, "ring-closure digit without a preceding atom");
        auto it = open_rings.find(t.ring_number);
        if (it == open_rings.end()) {
          open_rings.emplace(t.ring_number, OpenRing{*prev, pending, t.offset});
        } else {
          std::optional<BondOrder> order = pending;
          if (it->second.order) {
            if (order && *order != *it->second.order) {
              throw SmilesError(t.offset, "conflicting ring-closure bond orders");
            }
            order = it->second.order;
          }
          add_bond(it->second.atom, *prev, order, t.offset);
          open_rings.erase(it);
        }
        pending.reset();
        break;
      }
      case TokenKind::kDot: {
        if (!prev) throw SmilesError(t.offset, "'.' without a preceding atom");
        if (pending) throw SmilesError(t.offset, "bond symbol before '.'");
        if (!branch_stack.empty()) throw SmilesError(t.offset, "'.' inside a branch");
        prev.reset();
        saw_dot = true;
        break;
      }
    }
  }
  if (!open_rings.empty()) {
    const auto& [num, ring] = *open_rings.begin();
    throw SmilesError(ring.offset, "ring bond " + std::to_string(num) + " unclosed");
  }
  if (!branch_stack.empty()) throw SmilesError(branch_offsets.back(), "unclosed '('");
  if (pending) throw SmilesError(pending_offset, "dangling bond symbol at end of input");
  if (!prev) throw SmilesError(input.size(), "input ends with '.'");

  if (saw_dot) {
    std::size_t ncomp = 0;
    const auto label = component_labels(g, &ncomp);
    if (ncomp > 1) {
      if (!options.allow_salts) {
        throw SmilesError(input.find('.'), "multi-component SMILES (enable salts to keep the largest part)");
      }
      std::vector<std::size_t> sizes(ncomp, 0);
      for (auto l : label) ++sizes[l];
      const auto keep = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      std::vector<std::size_t> subset;
      for (std::size_t i = 0; i < label.size(); ++i) {
        if (label[i] == keep) subset.push_back(i);
      }
      auto warnings = std::move(g.warnings);
      warnings.push_back("kept largest of " + std::to_string(ncomp) + " components");
      auto source = std::move(g.source);
      g = induced_subgraph(g, subset);
      g.warnings = std::move(warnings);
      g.source = std::move(source);
      return g;
    }
  }

  auto warnings = std::move(g.warnings);
  g = perceive_rings(std::move(g));
  g.warnings.insert(g.warnings.begin(), warnings.begin(), warnings.end());
  return g;
}

MolGraph perceive_rings(MolGraph g) {
  g.rings.clear();
  for (auto& b : g.bonds) b.in_ring = false;
  const std::size_t nb = g.bonds.size();
  if (nb == 0) return g;
  std::size_t ncomp = 0;
  component_labels(g, &ncomp);
  const std::size_t rank_target = nb + ncomp - g.atoms.size();
  if (rank_target > 0) {
    const Adjacency adj(g);

    // BFS path between two atoms avoiding one bond, as a bond list.
    auto path = [&](std::size_t from, std::size_t to, std::size_t skip) -> std::optional<std::vector<std::size_t>> {
      std::vector<std::size_t> via(adj.lists.size(), SIZE_MAX);
      std::vector<bool> seen(adj.lists.size(), false);
      std::queue<std::size_t> q;
      q.push(from);
      seen[from] = true;
      while (!q.empty() && !seen[to]) {
        const auto u = q.front();
        q.pop();
        for (auto [v, k] : adj.lists[u]) {
          if (k == skip || seen[v]) continue;
          seen[v] = true;
          via[v] = k;
          q.push(v);
        }
      }
      if (!seen[to]) return std::nullopt;
      std::vector<std::size_t> bonds;
      for (std::size_t cur = to; cur != from;) {
        const auto k = via[cur];
        bonds.push_back(k);
        cur = g.bonds[k].other(cur);
      }
      return bonds;
    };

    // Candidates: the shortest cycle through each bond, plus fundamental
    // cycles of a BFS spanning forest so the candidate set always spans.
    std::vector<std::vector<std::size_t>> candidates;
    for (std::size_t k = 0; k < nb; ++k) {
      if (auto p = path(g.bonds[k].a, g.bonds[k].b, k)) {
        p->push_back(k);
        candidates.push_back(std::move(*p));
      }
    }
    {
      std::vector<std::size_t> parent_bond(g.atoms.size(), SIZE_MAX);
      std::vector<std::size_t> depth(g.atoms.size(), SIZE_MAX);
      std::vector<bool> tree(nb, false);
      for (std::size_t s = 0; s < g.atoms.size(); ++s) {
        if (depth[s] != SIZE_MAX) continue;
        depth[s] = 0;
        std::queue<std::size_t> q;
        q.push(s);
        while (!q.empty()) {
          const auto u = q.front();
          q.pop();
          for (auto [v, k] : adj.lists[u]) {
            if (depth[v] != SIZE_MAX) continue;
            depth[v] = depth[u] + 1;
            parent_bond[v] = k;
            tree[k] = true;
            q.push(v);
          }
        }
      }
      for (std::size_t k = 0; k < nb; ++k) {
        if (tree[k]) continue;
        std::vector<std::size_t> cyc{k};
        std::size_t x = g.bonds[k].a, y = g.bonds[k].b;
        while (x != y) {
          if (depth[x] >= depth[y]) {
            cyc.push_back(parent_bond[x]);
            x = g.bonds[parent_bond[x]].other(x);
          } else {
            cyc.push_back(parent_bond[y]);
            y = g.bonds[parent_bond[y]].other(y);
          }
        }
        candidates.push_back(std::move(cyc));
      }
    }
    for (auto& c : candidates) std::sort(c.begin(), c.end());
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& x, const auto& y) { return x.size() < y.size(); });

    // Greedy GF(2) elimination keeps the shortest independent cycles.
    std::vector<BitRow> basis;
    std::vector<std::size_t> pivots;
    for (const auto& c : candidates) {
      if (basis.size() == rank_target) break;
      BitRow row = to_bits(c, nb);
      for (std::size_t r = 0; r < basis.size(); ++r) {
        const auto p = pivots[r];
        if (row[p / 64] >> (p % 64) & 1U) {
          for (std::size_t w = 0; w < row.size(); ++w) row[w] ^= basis[r][w];
        }
      }
      std::size_t pivot = SIZE_MAX;
      for (std::size_t k = 0; k < nb; ++k) {
        if (row[k / 64] >> (k % 64) & 1U) {
          pivot = k;
          break;
        }
      }
      if (pivot == SIZE_MAX) continue;
      basis.push_back(std::move(row));
      pivots.push_back(pivot);
      for (auto k : c) g.bonds[k].in_ring = true;
      g.rings.push_back(cycle_atoms(g, c));
    }
  }
  for (auto& b : g.bonds) {
    if (b.order == BondOrder::kAromatic && !b.in_ring) b.order = BondOrder::kSingle;
  }
  return g;
}

MolGraph induced_subgraph(const MolGraph& g, std::span<const std::size_t> subset) {
  std::vector<std::size_t> sorted(subset.begin(), subset.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<std::size_t> remap(g.atoms.size(), SIZE_MAX);
  MolGraph out;
  for (auto i : sorted) {
    if (i >= g.atoms.size()) throw Error("atom index " + std::to_string(i) + " out of range");
    remap[i] = out.atoms.size();
    Atom a = g.atoms[i];
    a.index = out.atoms.size();
    out.atoms.push_back(std::move(a));
  }
  for (const auto& b : g.bonds) {
    if (remap[b.a] != SIZE_MAX && remap[b.b] != SIZE_MAX) {
      out.bonds.push_back(Bond{remap[b.a], remap[b.b], b.order, false});
    }
  }
  out.source = g.source;
  return perceive_rings(std::move(out));
}

namespace {

std::string atom_symbol(const Atom& a) {
  std::string sym = a.element;
  if (a.aromatic) {
    for (auto& ch : sym) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  const bool organic = a.aromatic ? is_aromatic_organic(sym) : is_organic(sym);
  if (organic && a.formal_charge == 0 && !a.explicit_h) return sym;
  std::string out = "[" + sym;
  const int h = a.explicit_h.value_or(0);
  if (h == 1) out += "H";
  if (h > 1) out += "H" + std::to_string(h);
  if (a.formal_charge > 0) out += "+";
  if (a.formal_charge < 0) out += "-";
  if (std::abs(a.formal_charge) > 1) out += std::to_string(std::abs(a.formal_charge));
  return out + "]";
}

std::string bond_symbol(const MolGraph& g, const Bond& b) {
  const bool both_aromatic = g.atoms[b.a].aromatic && g.atoms[b.b].aromatic;
  switch (b.order) {
    case BondOrder::kSingle:
      return both_aromatic ? "-" : "";
    case BondOrder::kDouble:
      return "=";
    case BondOrder::kTriple:
      return "#";
    case BondOrder::kAromatic:
      return both_aromatic ? "" : ":";
  }
  return "";
}

std::string ring_label(int n) { return n < 10 ? std::to_string(n) : "%" + std::to_string(n); }

}  // namespace

std::string write_smiles(const MolGraph& parent, std::span<const std::size_t> subset) {
  if (subset.empty()) throw Error("write_smiles: empty atom subset");
  const MolGraph g = induced_subgraph(parent, subset);
  if (g.component_count() != 1) throw Error("write_smiles: atom subset is disconnected");
  const Adjacency adj(g);
  const std::size_t n = g.atoms.size();

  // Pass 1: DFS tree plus ring-closure (back) edges.
  std::vector<bool> visited(n, false);
  std::vector<bool> bond_seen(g.bonds.size(), false);
  std::vector<std::vector<std::size_t>> children(n);      // child atoms in visit order
  std::vector<std::size_t> parent_bond(n, SIZE_MAX);
  std::vector<std::vector<std::size_t>> opens(n), closes(n);  // bond indices
  std::function<void(std::size_t)> dfs = [&](std::size_t u) {
    visited[u] = true;
    for (auto [v, k] : adj.lists[u]) {
      if (bond_seen[k]) continue;
      bond_seen[k] = true;
      if (!visited[v]) {
        children[u].push_back(v);
        parent_bond[v] = k;
        dfs(v);
      } else {
        opens[v].push_back(k);
        closes[u].push_back(k);
      }
    }
  };
  dfs(0);

  // Pass 2: emission with lowest-free ring numbers.
  std::string out;
  std::set<int> free_numbers;
  for (int i = 1; i < 100; ++i) free_numbers.insert(i);
  std::map<std::size_t, int> number_of;  // bond -> ring label
  std::function<void(std::size_t)> emit = [&](std::size_t u) {
    if (parent_bond[u] != SIZE_MAX) out += bond_symbol(g, g.bonds[parent_bond[u]]);
    out += atom_symbol(g.atoms[u]);
    for (auto k : closes[u]) {
      const int num = number_of.at(k);
      out += ring_label(num);
      free_numbers.insert(num);
    }
    for (auto k : opens[u]) {
      if (free_numbers.empty()) throw Error("write_smiles: more than 99 open rings");
      const int num = *free_numbers.begin();
      free_numbers.erase(free_numbers.begin());
      number_of[k] = num;
      out += bond_symbol(g, g.bonds[k]) + ring_label(num);
    }
    for (std::size_t c = 0; c < children[u].size(); ++c) {
      const bool last = c + 1 == children[u].size();
      if (!last) out += "(";
      emit(children[u][c]);
      if (!last) out += ")";
    }
  };
  emit(0);
  return out;
}

std::string write_smiles(const MolGraph& g) {
  std::vector<std::size_t> all(g.atoms.size());
  std::iota(all.begin(), all.end(), 0);
  return write_smiles(g, all);
}

namespace {

// Class ids from sorted unique keys, so ids depend only on key values.
template <typename Key>
std::vector<std::size_t> rank_keys(const std::vector<Key>& keys) {
  std::vector<Key> uniq = keys;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  std::vector<std::size_t> out(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    out[i] = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), keys[i]) - uniq.begin());
  }
  return out;
}

std::size_t class_count(const std::vector<std::size_t>& cls) {
  return cls.empty() ? 0 : *std::max_element(cls.begin(), cls.end()) + 1;
}

// Refines classes by neighbour (bond order, class) multisets until stable.
std::vector<std::size_t> refine(const MolGraph& g, const Adjacency& adj, std::vector<std::size_t> cls) {
  using Key = std::pair<std::size_t, std::vector<std::pair<int, std::size_t>>>;
  for (;;) {
    std::vector<Key> keys(cls.size());
    for (std::size_t i = 0; i < cls.size(); ++i) {
      keys[i].first = cls[i];
      for (auto [v, k] : adj.lists[i]) keys[i].second.emplace_back(static_cast<int>(g.bonds[k].order), cls[v]);
      std::sort(keys[i].second.begin(), keys[i].second.end());
    }
    auto next = rank_keys(keys);
    if (class_count(next) == class_count(cls)) return next;
    cls = std::move(next);
  }
}

MolGraph relabel(const MolGraph& g, const std::vector<std::size_t>& new_of_old) {
  MolGraph out;
  out.atoms.resize(g.atoms.size());
  for (std::size_t i = 0; i < g.atoms.size(); ++i) {
    out.atoms[new_of_old[i]] = g.atoms[i];
    out.atoms[new_of_old[i]].index = new_of_old[i];
  }
  for (const auto& b : g.bonds) out.bonds.push_back(Bond{new_of_old[b.a], new_of_old[b.b], b.order, false});
  out.source = g.source;
  return perceive_rings(std::move(out));
}

constexpr std::size_t kCanonicalLeafLimit = 4096;

}  // namespace

std::string canonical_smiles(const MolGraph& parent, std::span<const std::size_t> subset) {
  if (subset.empty()) throw Error("canonical_smiles: empty atom subset");
  const MolGraph g = induced_subgraph(parent, subset);
  if (g.component_count() != 1) throw Error("canonical_smiles: atom subset is disconnected");
  const Adjacency adj(g);
  const std::size_t n = g.atoms.size();

  using Invariant = std::tuple<std::string, bool, int, int, std::size_t, std::vector<int>>;
  std::vector<Invariant> inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> orders;
    for (auto [v, k] : adj.lists[i]) orders.push_back(static_cast<int>(g.bonds[k].order));
    std::sort(orders.begin(), orders.end());
    const auto& a = g.atoms[i];
    inv[i] = {a.element, a.aromatic, a.formal_charge, a.explicit_h.value_or(-1), adj.lists[i].size(), orders};
  }
  const auto start = refine(g, adj, rank_keys(inv));

  // Individualise one atom of the first tied class, refine, recurse; keep the
  // smallest string over all branches.
  std::string best;
  std::size_t leaves = 0;
  std::function<void(const std::vector<std::size_t>&)> search = [&](const std::vector<std::size_t>& cls) {
    if (leaves >= kCanonicalLeafLimit && !best.empty()) return;
    if (class_count(cls) == n) {
      ++leaves;
      std::string s = write_smiles(relabel(g, cls));
      if (best.empty() || s < best) best = std::move(s);
      return;
    }
    std::vector<std::size_t> size(n, 0);
    for (auto c : cls) ++size[c];
    std::size_t target = SIZE_MAX;
    for (std::size_t c = 0; c < n; ++c) {
      if (size[c] > 1) {
        target = c;
        break;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (cls[i] != target) continue;
      // split the class: atom i goes first, the rest after it
      std::vector<std::pair<std::size_t, int>> keys(n);
      for (std::size_t j = 0; j < n; ++j) keys[j] = {cls[j], (cls[j] == target && j != i) ? 1 : 0};
      search(refine(g, adj, rank_keys(keys)));
    }
  };
  search(start);
  return best;
}

std::string canonical_smiles(const MolGraph& g) {
  std::vector<std::size_t> all(g.atoms.size());
  std::iota(all.begin(), all.end(), 0);
  return canonical_smiles(g, all);
}

bool isomorphic(const MolGraph& x, const MolGraph& y) {
  const std::size_t n = x.atoms.size();
  if (n != y.atoms.size() || x.bonds.size() != y.bonds.size()) return false;
  const Adjacency ax(x), ay(y);
  auto atom_key = [](const MolGraph& g, const Adjacency& adj, std::size_t i) {
    std::vector<int> orders;
    for (auto [v, k] : adj.lists[i]) orders.push_back(static_cast<int>(g.bonds[k].order));
    std::sort(orders.begin(), orders.end());
    return std::make_tuple(g.atoms[i].element, g.atoms[i].aromatic, g.atoms[i].formal_charge, orders);
  };
  std::vector<decltype(atom_key(x, ax, 0))> kx, ky;
  for (std::size_t i = 0; i < n; ++i) {
    kx.push_back(atom_key(x, ax, i));
    ky.push_back(atom_key(y, ay, i));
  }
  {
    auto sx = kx, sy = ky;
    std::sort(sx.begin(), sx.end());
    std::sort(sy.begin(), sy.end());
    if (sx != sy) return false;
  }
  // Visit x atoms in BFS order so each new atom has a mapped neighbour.
  std::vector<std::size_t> order;
  {
    std::vector<bool> seen(n, false);
    for (std::size_t s = 0; s < n; ++s) {
      if (seen[s]) continue;
      std::queue<std::size_t> q;
      q.push(s);
      seen[s] = true;
      while (!q.empty()) {
        auto u = q.front();
        q.pop();
        order.push_back(u);
        for (auto [v, k] : ax.lists[u]) {
          if (!seen[v]) {
            seen[v] = true;
            q.push(v);
          }
        }
      }
    }
  }
  std::vector<std::size_t> map_xy(n, SIZE_MAX), map_yx(n, SIZE_MAX);
  std::function<bool(std::size_t)> extend = [&](std::size_t depth) -> bool {
    if (depth == n) return true;
    const auto u = order[depth];
    for (std::size_t v = 0; v < n; ++v) {
      if (map_yx[v] != SIZE_MAX || kx[u] != ky[v]) continue;
      bool ok = true;
      for (auto [w, k] : ax.lists[u]) {
        if (map_xy[w] == SIZE_MAX) continue;
        auto kb = y.bond_between(v, map_xy[w]);
        if (!kb || y.bonds[*kb].order != x.bonds[k].order) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      // every mapped neighbour of v must correspond to a neighbour of u
      for (auto [w, k] : ay.lists[v]) {
        if (map_yx[w] != SIZE_MAX && !x.bond_between(u, map_yx[w])) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      map_xy[u] = v;
      map_yx[v] = u;
      if (extend(depth + 1)) return true;
      map_xy[u] = SIZE_MAX;
      map_yx[v] = SIZE_MAX;
    }
    return false;
  };
  return extend(0);
}

bool is_supported_drug_element(std::string_view e) {
  static constexpr std::array<std::string_view, 13> kSupported = {"H", "B",  "C", "N",  "O",  "F", "Si",
                                                                   "P", "S", "Cl", "Se", "Br", "I"};
  return std::find(kSupported.begin(), kSupported.end(), e) != kSupported.end();
}

bool has_only_supported_elements(const MolGraph& g) {
  return std::all_of(g.atoms.begin(), g.atoms.end(),
                     [](const Atom& a) { return is_supported_drug_element(a.element); });
}

}  // namespace dispa::chem
