#include "cokv/exact.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>

namespace cokv::exact {

namespace {

std::uint64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<std::uint64_t>(n - k + i) / i;
  return r;
}

// U(S) for every mask S, indexed by the mask bits.
std::vector<double> utility_table(const UtilityOracle& oracle) {
  const int n = oracle.n();
  check_enumerable(n);
  const std::uint64_t total = std::uint64_t{1} << n;
  std::vector<double> table(total);
  for (std::uint64_t bits = 0; bits < total; ++bits) {
    table[bits] = oracle.utility(CoalitionMask::FromBits(n, bits));
  }
  return table;
}

std::vector<std::vector<double>> slice_values_from(const std::vector<double>& table, int n) {
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;
  std::vector<std::vector<double>> sums(n, std::vector<double>(n, 0.0));
  for (std::uint64_t bits = 1; bits <= full; ++bits) {
    const int size = std::popcount(bits);
    const double cc = table[bits] - table[full & ~bits];
    for (int i = 0; i < n; ++i) {
      if ((bits >> i) & 1u) sums[i][size - 1] += cc;
    }
  }
  for (int j = 1; j <= n; ++j) {
    const double weight = static_cast<double>(binomial(n - 1, j - 1));
    for (int i = 0; i < n; ++i) sums[i][j - 1] /= weight;
  }
  return sums;
}

}  // namespace

void check_enumerable(int n) {
  if (n > kMaxPlayers) {
    throw CapabilityError("exact enumeration supports at most " +
                          std::to_string(kMaxPlayers) + " players, got " +
                          std::to_string(n));
  }
}

std::vector<double> shapley(const UtilityOracle& oracle) {
  const int n = oracle.n();
  const std::vector<double> table = utility_table(oracle);
  const std::uint64_t total = std::uint64_t{1} << n;
  std::vector<double> out(n, 0.0);
  // Marginals are grouped by coalition size before weighting, so players with
  // identical contributions see identical partial sums.
  std::vector<double> by_size(n);
  for (int i = 0; i < n; ++i) {
    const std::uint64_t bit = std::uint64_t{1} << i;
    std::fill(by_size.begin(), by_size.end(), 0.0);
    for (std::uint64_t bits = 0; bits < total; ++bits) {
      if (bits & bit) continue;
      by_size[std::popcount(bits)] += table[bits | bit] - table[bits];
    }
    double sv = 0.0;
    for (int k = 0; k < n; ++k) sv += by_size[k] / static_cast<double>(binomial(n - 1, k));
    out[i] = sv / n;
  }
  return out;
}

std::vector<std::vector<double>> slice_values(const UtilityOracle& oracle) {
  return slice_values_from(utility_table(oracle), oracle.n());
}

double slice_value(const UtilityOracle& oracle, int player, int size) {
  const int n = oracle.n();
  if (player < 0 || player >= n) {
    throw ConfigError("player index " + std::to_string(player) + " out of range");
  }
  if (size < 1 || size > n) {
    throw ConfigError("slice size " + std::to_string(size) + " outside [1, " +
                      std::to_string(n) + "]");
  }
  check_enumerable(n);
  const std::uint64_t full = (std::uint64_t{1} << n) - 1;
  const std::uint64_t bit = std::uint64_t{1} << player;
  double sum = 0.0;
  for (std::uint64_t bits = 1; bits <= full; ++bits) {
    if (!(bits & bit) || std::popcount(bits) != size) continue;
    sum += oracle.utility(CoalitionMask::FromBits(n, bits)) -
           oracle.utility(CoalitionMask::FromBits(n, full & ~bits));
  }
  return sum / static_cast<double>(binomial(n - 1, size - 1));
}

std::vector<double> shapley_cc(const UtilityOracle& oracle) {
  const int n = oracle.n();
  const auto values = slice_values(oracle);
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (int j = 0; j < n; ++j) total += values[i][j];
    out[i] = total / n;
  }
  return out;
}

std::vector<double> sliced_shapley(const UtilityOracle& oracle, const SliceSet& slices) {
  const int n = oracle.n();
  if (slices.n() != n) {
    throw ConfigError("slice set built for n=" + std::to_string(slices.n()) +
                      ", game has n=" + std::to_string(n));
  }
  const auto values = slice_values(oracle);
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (int j : slices.sizes()) total += values[i][j - 1];
    out[i] = total / slices.size();
  }
  return out;
}

}  // namespace cokv::exact
