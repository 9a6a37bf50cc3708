#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dispa/chem/smiles.hpp"

namespace dispa::chem {

// Atom environments of the BRICS scheme (Degen et al. labels). L7 (the
// C=C environment) is omitted because only acyclic single bonds are cut.
enum class BricsEnv { L1, L3, L4, L5, L6, L8, L9, L10, L11, L12, L13, L14, L15, L16 };

std::string_view env_label(BricsEnv env);
bool matches_env(const MolGraph& g, std::size_t atom, BricsEnv env);

struct BricsRule {
  std::string id;  // "L1-L3" style
  BricsEnv env_a;
  BricsEnv env_b;
  BondOrder bond_order = BondOrder::kSingle;
};

// Version tag of the shipped rule table; bump when the table changes.
inline constexpr std::string_view kRuleTableVersion = "brics-subset-1";

const std::vector<BricsRule>& default_rules();

struct Fragment {
  std::vector<std::size_t> atoms;  // parent atom indices, ascending
  std::string smiles;
  int attachment_count = 0;
};

// Acyclic single bonds whose endpoints satisfy some rule, ascending.
std::vector<std::size_t> find_cleavable_bonds(const MolGraph& g, std::span<const BricsRule> rules);
std::vector<std::size_t> find_cleavable_bonds(const MolGraph& g);

// Cuts every cleavable bond at once; fragments ordered by lowest parent atom.
std::vector<Fragment> fragment(const MolGraph& g, std::span<const BricsRule> rules);
std::vector<Fragment> fragment(const MolGraph& g);

// Sorted, unique hashed circular-environment identifiers (radius 0..2).
using FeatureSet = std::vector<std::uint64_t>;

FeatureSet fingerprint(const MolGraph& g);
FeatureSet fragment_fingerprint(const Fragment& f);

}  // namespace dispa::chem
