#include "dispa/train/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "dispa/util/error.hpp"
#include "dispa/util/random.hpp"

namespace dispa::train {

SplitMode parse_split_mode(std::string_view name) {
  if (name == "random") return SplitMode::kRandom;
  if (name == "cell_blind") return SplitMode::kCellBlind;
  if (name == "drug_blind") return SplitMode::kDrugBlind;
  if (name == "disjoint") return SplitMode::kDisjoint;
  throw Error("unknown split mode '" + std::string(name) + "'");
}

std::string to_string(SplitMode mode) {
  switch (mode) {
    case SplitMode::kRandom: return "random";
    case SplitMode::kCellBlind: return "cell_blind";
    case SplitMode::kDrugBlind: return "drug_blind";
    case SplitMode::kDisjoint: return "disjoint";
  }
  return "?";
}

namespace {

enum Part : int { kTrain = 0, kVal = 1, kTest = 2 };

std::array<double, 3> normalized(const std::array<double, 3>& r) {
  for (double x : r) {
    if (!(x > 0.0) || !std::isfinite(x)) throw Error("split ratios must be positive");
  }
  const double s = r[0] + r[1] + r[2];
  return {r[0] / s, r[1] / s, r[2] / s};
}

// Assigns each of `n` items to a part. Test comes from `test_rng`, the rest
// from `rng`; with the same generator for both this is one shuffle.
std::vector<int> assign(std::size_t n, const std::array<double, 3>& ratios, rnd::Engine& rng, rnd::Engine& test_rng,
                        bool at_least_one) {
  auto count = [&](double frac) {
    auto c = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
    return at_least_one ? std::max<std::size_t>(c, 1) : c;
  };
  const std::size_t n_test = count(ratios[kTest]), n_val = count(ratios[kVal]);
  if (n_test + n_val >= n) throw Error("split: too few items for the requested ratios");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rnd::shuffle(order, test_rng);
  std::vector<int> part(n, kTrain);
  for (std::size_t i = 0; i < n_test; ++i) part[order[i]] = kTest;
  std::vector<std::size_t> rest(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
  std::sort(rest.begin(), rest.end());
  rnd::shuffle(rest, rng);
  for (std::size_t i = 0; i < n_val; ++i) part[rest[i]] = kVal;
  return part;
}

// Same as assign, but test items are given explicitly.
std::vector<int> assign_with_test(const std::vector<std::string>& ids, const std::vector<std::string>& test_ids,
                                  const std::array<double, 3>& ratios, rnd::Engine& rng) {
  const std::set<std::string> test(test_ids.begin(), test_ids.end());
  std::vector<int> part(ids.size(), kTrain);
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (test.count(ids[i]) != 0) {
      part[i] = kTest;
    } else {
      rest.push_back(i);
    }
  }
  if (rest.size() == ids.size()) throw Error("split: none of the explicit test ids occur in the responses");
  const double val_share = ratios[kVal] / (ratios[kTrain] + ratios[kVal]);
  auto n_val = static_cast<std::size_t>(std::llround(val_share * static_cast<double>(rest.size())));
  n_val = std::max<std::size_t>(n_val, 1);
  if (n_val >= rest.size()) throw Error("split: too few non-test ids for a validation set");
  rnd::shuffle(rest, rng);
  for (std::size_t i = 0; i < n_val; ++i) part[rest[i]] = kVal;
  return part;
}

std::vector<int> assign_ids(const std::vector<std::string>& ids, const std::vector<std::string>& explicit_test,
                            const SplitSpec& spec, const std::array<double, 3>& ratios, std::uint64_t salt,
                            const char* what) {
  rnd::Engine rng(spec.seed ^ salt);
  if (!explicit_test.empty()) return assign_with_test(ids, explicit_test, ratios, rng);
  if (ids.size() < kMinBlindIds) {
    throw Error(std::string("split: need at least ") + std::to_string(kMinBlindIds) + " distinct " + what + " ids, got " +
                std::to_string(ids.size()));
  }
  if (spec.fixed_test) {
    rnd::Engine test_rng(spec.test_seed ^ salt);
    return assign(ids.size(), ratios, rng, test_rng, true);
  }
  return assign(ids.size(), ratios, rng, rng, true);
}

std::vector<std::size_t> index_of(const std::vector<std::string>& ids, const std::vector<data::Response>& rows,
                                  std::string data::Response::*field) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < ids.size(); ++i) pos.emplace(ids[i], i);
  std::vector<std::size_t> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(pos.at(r.*field));
  return out;
}

constexpr std::uint64_t kCellSalt = 0x63656c6cULL;
constexpr std::uint64_t kDrugSalt = 0x64727567ULL;

}  // namespace

Split make_split(const data::ResponseTable& responses, const SplitSpec& spec) {
  const auto& rows = responses.rows;
  if (rows.empty()) throw Error("split: response table is empty");
  const auto ratios = normalized(spec.ratios);
  Split out;
  auto place = [&](std::size_t i, int part) {
    (part == kTrain ? out.train : part == kVal ? out.val : out.test).push_back(i);
  };

  if (spec.mode == SplitMode::kRandom) {
    rnd::Engine rng(spec.seed);
    std::vector<int> part;
    if (spec.fixed_test) {
      rnd::Engine test_rng(spec.test_seed);
      part = assign(rows.size(), ratios, rng, test_rng, false);
    } else {
      part = assign(rows.size(), ratios, rng, rng, false);
    }
    for (std::size_t i = 0; i < rows.size(); ++i) place(i, part[i]);
    return out;
  }

  const auto cells = responses.cell_ids();
  const auto drugs = responses.drug_ids();
  std::vector<int> cell_part, drug_part;
  if (spec.mode != SplitMode::kDrugBlind) cell_part = assign_ids(cells, spec.test_cells, spec, ratios, kCellSalt, "cell");
  if (spec.mode != SplitMode::kCellBlind) drug_part = assign_ids(drugs, spec.test_drugs, spec, ratios, kDrugSalt, "drug");
  const auto cell_of = index_of(cells, rows, &data::Response::cell_id);
  const auto drug_of = index_of(drugs, rows, &data::Response::drug_id);

  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (spec.mode == SplitMode::kCellBlind) {
      place(i, cell_part[cell_of[i]]);
    } else if (spec.mode == SplitMode::kDrugBlind) {
      place(i, drug_part[drug_of[i]]);
    } else if (cell_part[cell_of[i]] == drug_part[drug_of[i]]) {
      place(i, cell_part[cell_of[i]]);
    } else {
      ++out.dropped;
    }
  }
  if (out.train.empty() || out.test.empty()) throw Error("split: a partition came out empty");
  return out;
}

}  // namespace dispa::train
