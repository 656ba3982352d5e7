#pragma once

#include <vector>

#include "cokv/game.hpp"
#include "cokv/slice_set.hpp"

// Brute-force game values by full subset enumeration. These are the ground
// truth for every estimator test, so they favour clarity over speed.
namespace cokv::exact {

inline constexpr int kMaxPlayers = 20;

// Throws CapabilityError when n exceeds kMaxPlayers.
void check_enumerable(int n);

// Shapley value from marginal contributions:
//   SV_i = 1/n * sum_{S subset N\{i}} [U(S+i) - U(S)] / C(n-1, |S|)
std::vector<double> shapley(const UtilityOracle& oracle);

// Shapley value from complementary contributions over coalitions that
// contain the player: SV_i = 1/n * sum_j SV_{i,j}.
std::vector<double> shapley_cc(const UtilityOracle& oracle);

// SV_{i,j}: mean of U(S) - U(N\S) over the C(n-1, j-1) coalitions S of size j
// containing player i. `player` is 0-based, 1 <= size <= n.
double slice_value(const UtilityOracle& oracle, int player, int size);

// All SV_{i,j} at once; result[i][j-1].
std::vector<std::vector<double>> slice_values(const UtilityOracle& oracle);

// Sliced Shapley value: mean of SV_{i,j} over j in `slices`.
std::vector<double> sliced_shapley(const UtilityOracle& oracle, const SliceSet& slices);

}  // namespace cokv::exact
