#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dispa/data/pathway.hpp"

namespace dispa::train {

enum class SplitMode { kRandom, kCellBlind, kDrugBlind, kDisjoint };

SplitMode parse_split_mode(std::string_view name);
std::string to_string(SplitMode mode);

struct SplitSpec {
  SplitMode mode = SplitMode::kRandom;
  std::array<double, 3> ratios{3.0, 1.0, 1.0};  // train, val, test
  std::uint64_t seed = 0;
  // Holds the test partition fixed: it is drawn from test_seed while
  // train/val follow `seed`.
  bool fixed_test = false;
  std::uint64_t test_seed = 0;
  // Explicit test ids override the random test partition of blind modes.
  std::vector<std::string> test_cells;
  std::vector<std::string> test_drugs;
};

struct Split {
  std::vector<std::size_t> train, val, test;  // row indices, ascending
  std::size_t dropped = 0;                    // pairs crossing partitions (disjoint mode)
};

// Minimum distinct ids per blinded dimension when partitioning randomly.
inline constexpr std::size_t kMinBlindIds = 5;

Split make_split(const data::ResponseTable& responses, const SplitSpec& spec);

}  // namespace dispa::train
