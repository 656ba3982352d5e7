#include "doctest.h"

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>

#include "cokv/allocation.hpp"
#include "cokv/error.hpp"

using namespace cokv;

namespace {

std::int64_t spent(const AllocationPlan& p) {
  std::int64_t total = 0;
  for (auto c : p.cache_sizes) total += c - p.window;
  return total;
}

// Hamilton apportionment in exact integer arithmetic: quota_i = total*w_i/W
// with remainder (total*w_i mod W). Returns nullopt when two remainders tie.
std::optional<std::vector<std::int64_t>> hamilton_reference(std::int64_t total,
                                                            const std::vector<std::int64_t>& w) {
  const std::int64_t sum = std::accumulate(w.begin(), w.end(), std::int64_t{0});
  const std::size_t n = w.size();
  std::vector<std::int64_t> out(n), rem(n);
  std::int64_t given = 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = total * w[i] / sum;
    rem[i] = total * w[i] % sum;
    given += out[i];
  }
  std::vector<std::int64_t> sorted = rem;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) return std::nullopt;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; given < total; ++k, ++given) ++out[order[k]];
  return out;
}

}  // namespace

TEST_SUITE("allocation") {

TEST_CASE("normalization examples") {
  const std::vector<double> scores{0.5, 0.3, 0.1, -0.2};
  const auto nsv = normalize_scores(scores, 1);
  CHECK(nsv[0] == 1.0);
  CHECK(nsv[1] == doctest::Approx(5.0 / 7).epsilon(1e-12));
  CHECK(nsv[2] == doctest::Approx(3.0 / 7).epsilon(1e-12));
  CHECK(nsv[3] == 0.0);

  const std::vector<double> flat(5, 0.25);
  for (double v : normalize_scores(flat, 0)) CHECK(v == 1.0);

  const std::vector<double> ascending{1, 2, 3, 4, 5};
  const auto top_only = normalize_scores(ascending, 4);
  CHECK(top_only == std::vector<double>{0, 0, 0, 0, 1});

  CHECK_THROWS_AS(normalize_scores(ascending, 5), ConfigError);
  CHECK_THROWS_AS(normalize_scores(ascending, -1), ConfigError);
}

TEST_CASE("alpha zeroes exactly alpha heads, ties by lower index") {
  const std::vector<double> scores{0.2, 0.1, 0.1, 0.9, 0.5};
  const auto nsv = normalize_scores(scores, 2);
  CHECK(nsv[1] == 0.0);
  CHECK(nsv[2] == 0.0);
  CHECK(nsv[0] == doctest::Approx(0.125));
  CHECK(nsv[3] == 1.0);
  CHECK(nsv[4] == doctest::Approx(0.5));
}

TEST_CASE("worked allocation example") {
  const std::vector<double> scores{0.5, 0.3, 0.1, -0.2};
  const auto plan = allocate_from_scores(scores, {100, 8, 1});
  CHECK(plan.cache_sizes == std::vector<std::int64_t>{55, 41, 28, 8});
  CHECK(spent(plan) == 100);
  const std::vector<double> nsv{1.0, 0.7142857, 0.4285714, 0.0};
  CHECK(allocate(nsv, {100, 8, 1}).cache_sizes == std::vector<std::int64_t>{55, 41, 28, 8});
}

TEST_CASE("allocation edge cases") {
  const std::vector<double> nsv{1.0, 0.3, 0.0};
  for (auto c : allocate(nsv, {0, 8, 0}).cache_sizes) CHECK(c == 8);
  const std::vector<double> uniform(4, 0.6);
  for (auto c : allocate(uniform, {100, 2, 0}).cache_sizes) CHECK(c == 27);
  const std::vector<double> zero(3, 0.0);
  const auto fallback = allocate(zero, {10, 1, 0});
  CHECK(fallback.warnings.size() == 1);
  CHECK(fallback.cache_sizes == std::vector<std::int64_t>{5, 4, 4});
  CHECK_THROWS_AS(allocate(nsv, {-1, 8, 0}), ConfigError);
}

TEST_CASE("apportionment matches an exact integer reference") {
  std::mt19937_64 rng(17);
  int compared = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 12);
    std::vector<std::int64_t> w(n);
    for (auto& x : w) x = static_cast<std::int64_t>(rng() % 50);
    w[rng() % n] += 1;
    const std::int64_t total = static_cast<std::int64_t>(rng() % 5000);
    const auto ref = hamilton_reference(total, w);
    if (!ref) continue;
    const std::vector<double> wd(w.begin(), w.end());
    CHECK(apportion(total, wd) == *ref);
    ++compared;
  }
  CHECK(compared > 1000);
}

TEST_CASE("conservation under fuzzing") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> score(-3, 3);
  for (int trial = 0; trial < 2000; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 40);
    std::vector<double> scores(n);
    for (auto& s : scores) s = score(rng);
    const int alpha = static_cast<int>(rng() % n);
    const std::int64_t budget = static_cast<std::int64_t>(rng() % 100000);
    const auto plan = allocate_from_scores(scores, {budget, 8, alpha});
    REQUIRE(spent(plan) == budget);
    for (auto c : plan.cache_sizes) CHECK(c >= 8);
  }
}

TEST_CASE("capacity caps") {
  const std::vector<double> nsv{1.0, 0.7142857, 0.4285714, 0.0};
  const auto plan = allocate(nsv, {100, 8, 1});

  const std::vector<std::int64_t> roomy{100, 100, 100, 100};
  CHECK(cap_and_redistribute(plan, roomy).cache_sizes == plan.cache_sizes);

  // Head 0 holds 55 but may keep only 40: 15 move to heads 1 and 2 in
  // proportion 0.714 : 0.429, i.e. 9.375 / 5.625 -> 9 and 6.
  const std::vector<std::int64_t> tight{40, 100, 100, 100};
  const auto capped = cap_and_redistribute(plan, tight);
  CHECK(capped.cache_sizes == std::vector<std::int64_t>{40, 50, 34, 8});
  CHECK(spent(capped) == 100);
  CHECK(capped.shortfall == 0);

  const std::vector<std::int64_t> small{20, 20, 20, 20};
  const auto saturated = cap_and_redistribute(plan, small);
  CHECK(saturated.cache_sizes == small);
  CHECK(saturated.shortfall == 100 + 4 * 8 - 80);

  const std::vector<std::int64_t> below_window{4, 100, 100, 100};
  CHECK_THROWS_AS(cap_and_redistribute(plan, below_window), ConfigError);
}

}
