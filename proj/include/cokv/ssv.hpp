#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cokv/game.hpp"
#include "cokv/rng.hpp"
#include "cokv/slice_set.hpp"

namespace cokv {

// How the slice size of each sample is chosen.
//   kRoundRobin: every |H| consecutive samples visit each slice once, in a
//     fresh random order per epoch. Within one slice j, consecutive
//     occurrences take disjoint (cyclically wrapped) blocks of j players from
//     a shared random permutation, so after ceil(n/j) occurrences every player
//     has been credited at slice j. Each coalition is still a uniform
//     j-subset, and conditioned on containing player i it is uniform over
//     the (i, j)-coalitions.
//   kIid: slice drawn uniformly from H and an independent uniform
//     permutation per sample, exactly as in the plain permutation sampler.
enum class SliceSchedule { kRoundRobin, kIid };

struct SamplingOptions {
  SliceSchedule schedule = SliceSchedule::kRoundRobin;
  // Also credit -u to the complement N\S at slice n-|S| when that size is in
  // H. Reuses both evaluations of a sample; off by default.
  bool mirror_credit = false;

  bool operator==(const SamplingOptions&) const = default;
};

// Running sums and counts of complementary contributions per (player, slice
// size). Storage is row-major n x n with column j-1 for size j.
class ContributionTable {
 public:
  ContributionTable(int n, SliceSet slices, std::uint64_t seed, SamplingOptions options = {});

  int n() const { return n_; }
  const SliceSet& slices() const { return slices_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t samples_drawn() const { return samples_drawn_; }
  const SamplingOptions& options() const { return options_; }

  double sum(int player, int size) const { return sums_[index(player, size)]; }
  std::uint64_t count(int player, int size) const { return counts_[index(player, size)]; }

  void credit(int player, int size, double u);
  void record_sample() { ++samples_drawn_; }

  std::span<const double> sums() const { return sums_; }
  std::span<const std::uint64_t> counts() const { return counts_; }

  // Rebuilds a table from serialized state.
  static ContributionTable FromRaw(int n, SliceSet slices, std::uint64_t seed,
                                   SamplingOptions options, std::uint64_t samples_drawn,
                                   std::vector<double> sums,
                                   std::vector<std::uint64_t> counts);

  bool operator==(const ContributionTable&) const = default;

 private:
  std::size_t index(int player, int size) const {
    return static_cast<std::size_t>(player) * n_ + (size - 1);
  }

  int n_;
  SliceSet slices_;
  std::uint64_t seed_;
  SamplingOptions options_;
  std::uint64_t samples_drawn_ = 0;
  std::vector<double> sums_;
  std::vector<std::uint64_t> counts_;
};

// Entrywise sum. Tables must agree on n, slice set and options; the result
// keeps a's seed.
ContributionTable merge_tables(const ContributionTable& a, const ContributionTable& b);

struct SsvEstimate {
  std::vector<double> values;                        // SSV^H per player
  std::vector<std::vector<double>> per_slice_means;  // [player][slice position in H]
  std::uint64_t total_samples = 0;
  std::uint64_t oracle_evaluations = 0;
  SliceSet slice_set;
  std::uint64_t seed = 0;
};

// One coalition chosen by the sampler.
struct SampleDraw {
  int slice = 0;
  std::vector<int> members;  // the first `slice` players of the permutation
};

// Deterministic map from sample index to coalition. Sample k depends only on
// (seed, k), so runs can be split across workers or resumed at any index.
class SampleSchedule {
 public:
  SampleSchedule(int n, SliceSet slices, std::uint64_t seed, SamplingOptions options);

  SampleDraw draw(std::uint64_t k);

 private:
  SampleDraw draw_round_robin(std::uint64_t k);
  SampleDraw draw_iid(std::uint64_t k);

  int n_;
  SliceSet slices_;
  std::uint64_t seed_;
  SamplingOptions options_;
  // Last block permutation, keyed by (slice, block epoch).
  int cached_slice_ = -1;
  std::uint64_t cached_epoch_ = 0;
  std::vector<int> cached_perm_;
};

// Evaluates the coalition of the first `slice` entries of `permutation`,
// credits u = U(S) - U(N\S) to every member and counts one sample. On oracle
// failure the table is unchanged.
void apply_sample(const UtilityOracle& oracle, std::span<const int> permutation, int slice,
                  ContributionTable& table);

// One plain sampler step: slice uniform from the table's slice set, uniform
// random permutation from `rng`.
void sample_once(const UtilityOracle& oracle, SplitMix64& rng, ContributionTable& table);

// Runs samples [table.samples_drawn(), +count) of the table's schedule.
// workers > 1 splits the range into contiguous chunks with private tables
// merged in chunk order. With one worker, an oracle failure keeps every
// completed sample; with several, the table is left unchanged.
void run_samples(const UtilityOracle& oracle, ContributionTable& table, std::uint64_t count,
                 int workers = 1);

// Smallest sample count for which the round-robin schedule credits every
// player at every slice.
std::uint64_t min_samples_for_coverage(int n, const SliceSet& slices);

// Per-player SSV from a table. Refuses (ConfigError) when any player has no
// sample at some slice of H.
SsvEstimate finalize(const ContributionTable& table, std::uint64_t oracle_evaluations = 0);

SsvEstimate estimate_ssv(const UtilityOracle& oracle, const SliceSet& slices,
                         std::uint64_t samples, std::uint64_t seed, int workers = 1,
                         SamplingOptions options = {});

// Mean absolute difference between two estimates' values.
double mae(const SsvEstimate& a, const SsvEstimate& b);

// True iff mae < 1/n.
bool converged(double mae_value, int n);
bool converged(const SsvEstimate& a, const SsvEstimate& b);

// Elementwise mean of two estimates of the same configuration.
SsvEstimate average(const SsvEstimate& a, const SsvEstimate& b);

// Hoeffding sample count with a union bound over n players x |H| slices.
// Complementary contributions span 2 * utility_range:
//   M = ceil(2 * |H| * range^2 * ln(2 * |H| * n / delta) / epsilon^2)
std::uint64_t required_samples(double epsilon, double delta, int slice_count,
                               double utility_range, int n);

}  // namespace cokv
