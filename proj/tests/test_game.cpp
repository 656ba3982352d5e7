#include "doctest.h"

#include <cmath>

#include "cokv/exact.hpp"
#include "cokv/game.hpp"
#include "cokv/rng.hpp"

using namespace cokv;

namespace {

CoalitionMask mask(int n, std::vector<int> one_based) {
  for (auto& p : one_based) --p;
  return CoalitionMask::FromMembers(n, one_based);
}

// Textbook permutation definition of the Shapley value, independent of the
// subset-weighting code in exact::shapley.
std::vector<double> shapley_by_permutations(const UtilityOracle& g) {
  const int n = g.n();
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::vector<double> sum(n, 0.0);
  double perms = 0;
  do {
    CoalitionMask s(n);
    double prev = g.utility(s);
    for (int p : order) {
      s.set(p);
      const double cur = g.utility(s);
      sum[p] += cur - prev;
      prev = cur;
    }
    perms += 1;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& v : sum) v /= perms;
  return sum;
}

}  // namespace

TEST_SUITE("game") {

TEST_CASE("coalition mask basics") {
  auto s = mask(70, {1, 3, 70});
  CHECK(s.count() == 3);
  CHECK(s.contains(0));
  CHECK(s.contains(69));
  CHECK_FALSE(s.contains(1));
  CHECK(s.complement().count() == 67);
  CHECK(s.complement().complement() == s);
  CHECK(CoalitionMask::FromHexKey(70, s.hex_key()) == s);
  CHECK(to_string(mask(4, {1, 3})) == "{p1,p3}");
  CHECK(CoalitionMask::Full(4).low_bits() == 0xF);
  CHECK(CoalitionMask(5).empty());
}

TEST_CASE("player labels") {
  CHECK(PlayerSet(3).label(2).name == "p3");
  CHECK(PlayerLabel::HeadGroup(2, 5).name == "L2.G5");
  CHECK_THROWS_AS(PlayerSet({PlayerLabel::Opaque("a"), PlayerLabel::Opaque("a")}), ConfigError);
}

TEST_CASE("utility examples") {
  AdditiveGame g({1, 2, 3, 4});
  CHECK(g.utility(mask(4, {1, 3})) == 4.0);
  CHECK(g.utility(CoalitionMask(4)) == 0.0);

  SaboteurParams p;
  p.base = 1.0;
  p.harmful = {{1, -0.3}};
  SaboteurGame sab(4, p);
  CHECK(sab.utility(CoalitionMask::Full(4)) == doctest::Approx(0.7).epsilon(1e-15));

  CHECK_THROWS_AS(g.utility(CoalitionMask(3)), ConfigError);
}

TEST_CASE("complementary contribution examples") {
  AdditiveGame g({1, 2, 3, 4});
  CHECK(complementary_contribution(g, mask(4, {1, 2})) == -4.0);
  CHECK(complementary_contribution(g, mask(4, {1, 4})) == 0.0);
  CHECK(complementary_contribution(g, CoalitionMask::Full(4)) == 10.0);
  RandomGame r(5, 3);
  CHECK(complementary_contribution(r, CoalitionMask::Full(5)) ==
        r.utility(CoalitionMask::Full(5)) - r.utility(CoalitionMask(5)));
}

TEST_CASE("range violations are evaluation errors") {
  GameSpec spec = parse_game_spec(R"({"family":"additive","params":{"weights":[1,2]},"range":[0,5]})");
  auto oracle = make_builtin_oracle(spec);
  CHECK(oracle->utility(CoalitionMask::Full(2)) == 3.0);
  CHECK_THROWS_AS(
      make_builtin_oracle(parse_game_spec(R"({"family":"additive","params":{"weights":[1,2]},"range":[0,2]})")),
      ConfigError);
}

TEST_CASE("game spec parsing") {
  auto spec = parse_game_spec(R"({"family":"saboteur","params":{"base":1,
      "helpful":[{"player":0,"gain":0.5}],"harmful":[[2,-0.25]]},"n":4})");
  CHECK(spec.n == 4);
  auto o = make_builtin_oracle(spec);
  CHECK(o->utility(CoalitionMask::Full(4)) == 1.25);
  CHECK(parse_game_spec(game_spec_to_json(spec)).n == 4);
  CHECK_THROWS_AS(parse_game_spec(R"({"family":"nope"})"), ConfigError);
  CHECK_THROWS_AS(parse_game_spec(R"({"family":"symmetric","params":{"by_size":[0,1]},"n":3})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_game_spec("{not json"), ConfigError);
}

TEST_CASE("exact shapley examples") {
  AdditiveGame g({1, 2, 3, 4});
  const auto sv = exact::shapley(g);
  for (int i = 0; i < 4; ++i) CHECK(sv[i] == doctest::Approx(i + 1.0).epsilon(1e-12));
  const auto cc = exact::shapley_cc(g);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(cc[i] - (i + 1.0)) <= 1e-9);

  SymmetricGame one({0.1, 0.9});
  CHECK(exact::shapley(one)[0] == doctest::Approx(0.8));
  CHECK(exact::shapley_cc(one)[0] == doctest::Approx(0.8));

  SymmetricGame sym({0.0, 0.3, 0.35, 0.8, 0.81});
  for (const auto& v : {exact::shapley(sym), exact::shapley_cc(sym)}) {
    for (double x : v) CHECK(x == v.front());
  }
}

TEST_CASE("exact shapley matches the permutation definition") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RandomGame g(5, seed);
    const auto ref = shapley_by_permutations(g);
    const auto sv = exact::shapley(g);
    const auto cc = exact::shapley_cc(g);
    for (int i = 0; i < 5; ++i) {
      CHECK(std::abs(sv[i] - ref[i]) <= 1e-12);
      CHECK(std::abs(cc[i] - ref[i]) <= 1e-9);
    }
  }
}

TEST_CASE("slice values") {
  AdditiveGame g({1, 2, 3, 4});
  CHECK(exact::slice_value(g, 0, 2) == -2.0);
  CHECK(exact::slice_value(g, 3, 2) == 2.0);
  CHECK(exact::slice_value(g, 2, 4) == 10.0);
  const auto h2 = exact::sliced_shapley(g, SliceSet({2}, 4));
  const double expect[] = {-2.0, -2.0 / 3, 2.0 / 3, 2.0};
  for (int i = 0; i < 4; ++i) CHECK(h2[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  const auto all = exact::sliced_shapley(g, SliceSet::All(4));
  for (int i = 0; i < 4; ++i) CHECK(std::abs(all[i] - (i + 1.0)) <= 1e-9);

  RandomGame r(6, 9);
  const auto table = exact::slice_values(r);
  for (int i = 0; i < 6; ++i) {
    for (int j = 1; j <= 6; ++j) CHECK(std::abs(exact::slice_value(r, i, j) - table[i][j - 1]) <= 1e-12);
  }
  SymmetricGame sym({0, 0.2, 0.5, 0.6, 1.0});
  const auto s = exact::sliced_shapley(sym, SliceSet({1, 3}, 4));
  for (double x : s) CHECK(x == s.front());
}

TEST_CASE("efficiency holds on brute-force paths") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    RandomGame g(7, seed);
    double total = 0;
    for (double v : exact::shapley(g)) total += v;
    CHECK(std::abs(total - (g.utility(CoalitionMask::Full(7)) - g.utility(CoalitionMask(7)))) <= 1e-12);
  }
}

TEST_CASE("enumeration guard") {
  CHECK_THROWS_AS(exact::check_enumerable(21), CapabilityError);
  CHECK_NOTHROW(exact::check_enumerable(20));
}

TEST_CASE("slice set validation") {
  CHECK_THROWS_AS(SliceSet({0}, 4), ConfigError);
  CHECK_THROWS_AS(SliceSet({5}, 4), ConfigError);
  CHECK_THROWS_AS(SliceSet({2, 2}, 4), ConfigError);
  CHECK_THROWS_AS(SliceSet({}, 4), ConfigError);
  CHECK(SliceSet({3, 1}, 4).sizes() == std::vector<int>{1, 3});
}

TEST_CASE("weighted voting") {
  WeightedVotingGame g({2, 1, 1}, 3);
  CHECK(g.utility(mask(3, {1, 2})) == 1.0);
  CHECK(g.utility(mask(3, {2, 3})) == 0.0);
  const auto sv = exact::shapley(g);
  CHECK(sv[0] == doctest::Approx(2.0 / 3));
  CHECK(sv[1] == doctest::Approx(1.0 / 6));
}

}
