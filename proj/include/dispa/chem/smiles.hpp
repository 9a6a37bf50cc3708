#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dispa/util/error.hpp"

namespace dispa::chem {

enum class BondOrder : std::uint8_t { kSingle = 1, kDouble = 2, kTriple = 3, kAromatic = 4 };

struct Atom {
  std::string element;  // capitalised symbol, e.g. "C", "Cl"
  bool aromatic = false;
  int formal_charge = 0;
  // Set for bracket atoms only; organic-subset atoms keep their hydrogens implicit.
  std::optional<int> explicit_h;
  std::size_t index = 0;
};

struct Bond {
  std::size_t a = 0;
  std::size_t b = 0;
  BondOrder order = BondOrder::kSingle;
  bool in_ring = false;

  std::size_t other(std::size_t atom) const { return atom == a ? b : a; }
};

struct MolGraph {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::vector<std::vector<std::size_t>> rings;  // cycle basis, atoms in walk order
  std::string source;
  std::vector<std::string> warnings;

  // (neighbor atom, bond index) pairs sorted by neighbor index.
  std::vector<std::pair<std::size_t, std::size_t>> neighbors(std::size_t atom) const;
  std::size_t degree(std::size_t atom) const;
  std::optional<std::size_t> bond_between(std::size_t a, std::size_t b) const;
  std::size_t component_count() const;
};

// Positioned failure from tokenizing or parsing a SMILES string.
class SmilesError : public Error {
 public:
  SmilesError(std::size_t offset, const std::string& message);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

enum class TokenKind { kAtom, kBracketAtom, kBond, kBranchOpen, kBranchClose, kRingClosure, kDot };

struct Token {
  TokenKind kind;
  std::string text;
  std::size_t offset = 0;
  int ring_number = -1;  // kRingClosure only
};

std::vector<Token> tokenize_smiles(std::string_view input);

struct ParseOptions {
  // Keep the largest dot-separated component instead of rejecting the input.
  bool allow_salts = false;
};

// Parses the Daylight organic subset plus bracket atoms. Stereo marks and
// isotopes are dropped with a warning. Rings are perceived before returning.
MolGraph parse_smiles(std::string_view input, const ParseOptions& options = {});

// Fills rings with a minimum-weight-first cycle basis and sets Bond::in_ring.
// Aromatic bonds left outside every ring are demoted to single.
MolGraph perceive_rings(MolGraph g);

// Subgraph induced by `subset`, atoms renumbered in ascending parent order.
MolGraph induced_subgraph(const MolGraph& g, std::span<const std::size_t> subset);

// Deterministic SMILES for the subgraph induced by `subset`: DFS from the
// lowest atom index, neighbours in index order. Throws if the subset is
// disconnected or empty.
std::string write_smiles(const MolGraph& g, std::span<const std::size_t> subset);
std::string write_smiles(const MolGraph& g);

// Numbering-independent SMILES: isomorphic inputs give the same string.
std::string canonical_smiles(const MolGraph& g, std::span<const std::size_t> subset);
std::string canonical_smiles(const MolGraph& g);

// Graph isomorphism on element, aromatic flag, charge and bond order.
bool isomorphic(const MolGraph& x, const MolGraph& y);

// Elements a drug may contain and still be fragmented; metals fall outside.
bool is_supported_drug_element(std::string_view element);
bool has_only_supported_elements(const MolGraph& g);

}  // namespace dispa::chem
