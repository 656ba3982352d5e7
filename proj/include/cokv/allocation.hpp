#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace cokv {

struct AllocationConfig {
  std::int64_t budget = 0;  // shared KV pairs B, beyond the local windows
  std::int64_t window = 0;  // local window s kept by every head
  int alpha = 0;            // heads whose normalized score is forced to 0
};

struct AllocationPlan {
  std::vector<std::int64_t> cache_sizes;  // c_i, window included
  std::vector<double> normalized;         // NSV_i in [0, 1]
  std::int64_t budget = 0;
  std::int64_t window = 0;
  std::int64_t shortfall = 0;  // budget that could not be placed under capacity caps
  std::vector<std::string> warnings;
};

// Min-max normalization over the n - alpha surviving heads:
//   NSV_i = (score_i - min^alpha) / (max - min^alpha), clamped to [0, 1],
// where min^alpha is the alpha-th smallest score (the smallest when alpha is
// 0). The alpha smallest heads get exactly 0; ties go to the lower index.
// When max == min^alpha every surviving head gets 1.
std::vector<double> normalize_scores(std::span<const double> scores, int alpha);

// c_i = round(B * NSV_i / sum NSV) + s with largest-remainder rounding, so
// sum(c_i - s) == B exactly. All-zero NSV falls back to a uniform split and
// records a warning.
AllocationPlan allocate(std::span<const double> normalized, const AllocationConfig& config);

// normalize_scores followed by allocate.
AllocationPlan allocate_from_scores(std::span<const double> scores, const AllocationConfig& config);

// Caps c_i at capacity_i and hands trimmed budget to the heads still below
// capacity, proportionally to their NSV (uniformly if those are all zero),
// until no head exceeds its capacity. If the capacities cannot hold B + n*s,
// every head ends at capacity and the missing amount is reported in
// `shortfall`.
AllocationPlan cap_and_redistribute(const AllocationPlan& plan,
                                    std::span<const std::int64_t> capacity);

// Largest-remainder (Hamilton) apportionment of `total` units by `weights`
// (nonnegative, positive sum). Equal remainders favour the lower index.
std::vector<std::int64_t> apportion(std::int64_t total, std::span<const double> weights);

}  // namespace cokv
