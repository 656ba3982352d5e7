#include "doctest.h"

#include <cmath>

#include "cokv/exact.hpp"
#include "cokv/ssv.hpp"
#include "helpers.hpp"

using namespace cokv;

namespace {

double max_error(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<std::uint64_t> slice_totals(const ContributionTable& t) {
  std::vector<std::uint64_t> out(t.n(), 0);
  for (int i = 0; i < t.n(); ++i) {
    for (int j = 1; j <= t.n(); ++j) out[j - 1] += t.count(i, j);
  }
  return out;
}

}  // namespace

TEST_SUITE("ssv") {

TEST_CASE("hand trace of one sample") {
  AdditiveGame g({1, 2, 3, 4});
  ContributionTable t(4, SliceSet({2}, 4), 0);
  const int perm[] = {2, 0, 3, 1};
  apply_sample(g, perm, 2, t);
  CHECK(t.sum(0, 2) == -2.0);
  CHECK(t.sum(2, 2) == -2.0);
  CHECK(t.count(0, 2) == 1);
  CHECK(t.count(2, 2) == 1);
  CHECK(t.count(1, 2) == 0);
  CHECK(t.count(3, 2) == 0);
  CHECK(t.samples_drawn() == 1);
}

TEST_CASE("two players, full slice") {
  AdditiveGame g({1, 2});
  ContributionTable t(2, SliceSet({2}, 2), 5);
  run_samples(g, t, 10);
  for (int i = 0; i < 2; ++i) {
    CHECK(t.count(i, 2) == 10);
    CHECK(t.sum(i, 2) == 30.0);
  }
}

TEST_CASE("failed evaluation leaves the table unchanged") {
  testing::FlakyAdditive g({1, 2, 3, 4}, 1);
  ContributionTable t(4, SliceSet({2}, 4), 0);
  const ContributionTable before = t;
  const int perm[] = {0, 1, 2, 3};
  CHECK_THROWS_AS(apply_sample(g, perm, 2, t), EvaluationError);
  CHECK(t == before);
}

TEST_CASE("same seed gives a bit-identical table") {
  RandomGame g(7, 11);
  for (auto schedule : {SliceSchedule::kRoundRobin, SliceSchedule::kIid}) {
    SamplingOptions opt{schedule, false};
    ContributionTable a(7, SliceSet({1, 3, 6}, 7), 42, opt);
    ContributionTable b(7, SliceSet({1, 3, 6}, 7), 42, opt);
    run_samples(g, a, 500);
    run_samples(g, b, 500);
    CHECK(a == b);
    ContributionTable c(7, SliceSet({1, 3, 6}, 7), 43, opt);
    run_samples(g, c, 500);
    CHECK_FALSE(a == c);
  }
}

TEST_CASE("worker count does not change the statistics") {
  AdditiveGame g({1, 2, 3, 4, 5, 6});  // integer sums: exact in any order
  ContributionTable one(6, SliceSet::All(6), 9);
  ContributionTable three(6, SliceSet::All(6), 9);
  run_samples(g, one, 997, 1);
  run_samples(g, three, 997, 3);
  CHECK(one == three);
}

TEST_CASE("sampler schedule covers the slice set") {
  SampleSchedule rr(10, SliceSet({2, 5}, 10), 1, {});
  std::vector<int> seen(10, 0);
  for (std::uint64_t k = 0; k < 10; ++k) {
    const auto d = rr.draw(k);
    CHECK(static_cast<int>(d.members.size()) == d.slice);
    if (d.slice == 2) {
      for (int p : d.members) ++seen[p];
    }
  }
  // Five occurrences of slice 2 cover all ten players once.
  for (int c : seen) CHECK(c == 1);
  CHECK(min_samples_for_coverage(10, SliceSet({2, 5}, 10)) == 10);
  CHECK(min_samples_for_coverage(4, SliceSet({1, 3}, 4)) == 8);
}

TEST_CASE("additive recovery") {
  AdditiveGame g({1, 2, 3, 4});
  const auto est = estimate_ssv(g, SliceSet::All(4), 20000, 7);
  CHECK(max_error(est.values, {1, 2, 3, 4}) <= 0.05);
  CHECK(est.total_samples == 20000);
  CHECK(est.oracle_evaluations == 40000);
}

TEST_CASE("symmetric game spread") {
  SymmetricGame g({0, 0.1, 0.15, 0.5, 0.55, 0.9, 1.0});
  const auto est = estimate_ssv(g, SliceSet({2, 4}, 6), 10000, 3);
  const auto [lo, hi] = std::minmax_element(est.values.begin(), est.values.end());
  CHECK(*hi - *lo <= 0.05);
}

TEST_CASE("i.i.d. and mirrored sampling stay unbiased") {
  RandomGame g(6, 21);
  const SliceSet h({1, 2, 4, 5}, 6);
  const auto exact_values = exact::sliced_shapley(g, h);
  for (SamplingOptions opt : {SamplingOptions{SliceSchedule::kIid, false},
                              SamplingOptions{SliceSchedule::kRoundRobin, true},
                              SamplingOptions{SliceSchedule::kIid, true}}) {
    const auto est = estimate_ssv(g, h, 30000, 5, 1, opt);
    CHECK(max_error(est.values, exact_values) <= 0.05);
  }
}

TEST_CASE("too few samples is a configuration error") {
  AdditiveGame g({1, 2, 3, 4});
  CHECK_THROWS_AS(estimate_ssv(g, SliceSet::All(4), 3, 0), ConfigError);
  // Four slices need ceil(4/1) = 4 occurrences of slice 1.
  CHECK_THROWS_AS(estimate_ssv(g, SliceSet::All(4), 15, 0), ConfigError);
  CHECK_NOTHROW(estimate_ssv(g, SliceSet::All(4), 16, 0));
}

TEST_CASE("finalize refuses uncovered cells") {
  ContributionTable t(3, SliceSet({1}, 3), 0);
  t.credit(0, 1, 1.0);
  CHECK_THROWS_AS(finalize(t), ConfigError);
}

TEST_CASE("merge") {
  RandomGame g(5, 2);
  const SliceSet h({1, 2, 3}, 5);
  ContributionTable a(5, h, 1), b(5, h, 2), empty(5, h, 3);
  run_samples(g, a, 300);
  run_samples(g, b, 200);
  const auto ab = merge_tables(a, b);
  const auto ba = merge_tables(b, a);
  CHECK(std::equal(ab.sums().begin(), ab.sums().end(), ba.sums().begin()));
  CHECK(std::equal(ab.counts().begin(), ab.counts().end(), ba.counts().begin()));
  CHECK(merge_tables(a, empty) == a);
  CHECK_THROWS_AS(merge_tables(a, ContributionTable(5, SliceSet({1}, 5), 0)), ConfigError);
}

TEST_CASE("two half runs match one run in total counts") {
  RandomGame g(8, 4);
  const SliceSet h({1, 3, 5, 7}, 8);
  ContributionTable whole(8, h, 10), half_a(8, h, 11), half_b(8, h, 12);
  run_samples(g, whole, 800);
  run_samples(g, half_a, 400);
  run_samples(g, half_b, 400);
  CHECK(slice_totals(merge_tables(half_a, half_b)) == slice_totals(whole));
}

TEST_CASE("continuing a table equals one longer run") {
  RandomGame g(6, 8);
  const SliceSet h({2, 3}, 6);
  for (SamplingOptions opt : {SamplingOptions{}, SamplingOptions{SliceSchedule::kIid, true}}) {
    ContributionTable resumed(6, h, 77, opt), fresh(6, h, 77, opt);
    run_samples(g, resumed, 123);
    run_samples(g, resumed, 456);
    run_samples(g, fresh, 579);
    CHECK(resumed == fresh);
  }
}

TEST_CASE("interrupted run keeps completed samples and resumes exactly") {
  const std::vector<double> w{1, 2, 3, 4, 5};
  testing::FlakyAdditive flaky(w, 301);  // dies during sample 151
  AdditiveGame good(w);
  const SliceSet h({1, 2, 4}, 5);
  ContributionTable t(5, h, 5);
  CHECK_THROWS_AS(run_samples(flaky, t, 1000), EvaluationError);
  CHECK(t.samples_drawn() == 150);
  run_samples(good, t, 1000 - t.samples_drawn());
  ContributionTable fresh(5, h, 5);
  run_samples(good, fresh, 1000);
  CHECK(t == fresh);
}

TEST_CASE("mae and convergence examples") {
  SsvEstimate a{{0, 1}, {{0}, {1}}, 0, 0, SliceSet({1}, 2), 0};
  SsvEstimate b{{1, 0}, {{1}, {0}}, 0, 0, SliceSet({1}, 2), 0};
  CHECK(mae(a, a) == 0.0);
  CHECK(mae(a, b) == 1.0);
  CHECK(converged(3.8e-3, 256));
  CHECK_FALSE(converged(1.0 / 4, 4));
  CHECK_FALSE(converged(0.3, 4));
  CHECK(average(a, b).values == std::vector<double>{0.5, 0.5});
}

TEST_CASE("required samples") {
  const auto m = required_samples(0.1, 0.1, 4, 1.0, 8);
  const auto quarter = required_samples(0.05, 0.1, 4, 1.0, 8);
  CHECK(std::abs(static_cast<double>(quarter) / m - 4.0) < 1e-3);
  CHECK(required_samples(0.1, 0.1, 5, 1.0, 8) >= m);
  CHECK(required_samples(0.1, 0.1, 4, 2.0, 8) >= m);
  CHECK(m == static_cast<std::uint64_t>(std::ceil(2 * 4 * std::log(2 * 4 * 8 / 0.1) / 0.01)));
  CHECK_THROWS_AS(required_samples(0, 0.1, 4, 1, 8), ConfigError);
  CHECK_THROWS_AS(required_samples(0.1, 1.5, 4, 1, 8), ConfigError);
}

}
