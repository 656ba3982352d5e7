#include "cokv/ssv.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

namespace cokv {

// --- SliceSet -------------------------------------------------------------

SliceSet::SliceSet(std::vector<int> sizes, int n) : sizes_(std::move(sizes)), n_(n) {
  if (n < 1) throw ConfigError("slice set needs n >= 1");
  if (sizes_.empty()) throw ConfigError("slice set must not be empty");
  std::sort(sizes_.begin(), sizes_.end());
  for (std::size_t k = 0; k < sizes_.size(); ++k) {
    if (sizes_[k] < 1 || sizes_[k] > n) {
      throw ConfigError("slice size " + std::to_string(sizes_[k]) + " outside [1, " +
                        std::to_string(n) + "]");
    }
    if (k > 0 && sizes_[k] == sizes_[k - 1]) {
      throw ConfigError("duplicate slice size " + std::to_string(sizes_[k]));
    }
  }
}

SliceSet SliceSet::All(int n) {
  std::vector<int> sizes(std::max(n, 0));
  std::iota(sizes.begin(), sizes.end(), 1);
  return SliceSet(std::move(sizes), n);
}

bool SliceSet::contains(int j) const {
  return std::binary_search(sizes_.begin(), sizes_.end(), j);
}

std::string SliceSet::to_string() const {
  std::string out = "{";
  for (std::size_t k = 0; k < sizes_.size(); ++k) {
    if (k) out += ",";
    out += std::to_string(sizes_[k]);
  }
  return out + "}";
}

// --- ContributionTable ----------------------------------------------------

ContributionTable::ContributionTable(int n, SliceSet slices, std::uint64_t seed,
                                     SamplingOptions options)
    : n_(n),
      slices_(std::move(slices)),
      seed_(seed),
      options_(options),
      sums_(static_cast<std::size_t>(n) * n, 0.0),
      counts_(static_cast<std::size_t>(n) * n, 0) {
  if (slices_.n() != n) {
    throw ConfigError("slice set built for n=" + std::to_string(slices_.n()) +
                      ", table has n=" + std::to_string(n));
  }
}

void ContributionTable::credit(int player, int size, double u) {
  const std::size_t at = index(player, size);
  sums_[at] += u;
  counts_[at] += 1;
}

ContributionTable ContributionTable::FromRaw(int n, SliceSet slices, std::uint64_t seed,
                                             SamplingOptions options,
                                             std::uint64_t samples_drawn,
                                             std::vector<double> sums,
                                             std::vector<std::uint64_t> counts) {
  ContributionTable t(n, std::move(slices), seed, options);
  if (sums.size() != t.sums_.size() || counts.size() != t.counts_.size()) {
    throw FormatError("contribution table payload does not match n=" + std::to_string(n));
  }
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const int size = static_cast<int>(k % n) + 1;
    const bool allowed =
        t.slices_.contains(size) || (options.mirror_credit && t.slices_.contains(n - size));
    if (counts[k] > 0 && !allowed) {
      throw FormatError("contribution table has samples at slice " + std::to_string(size) +
                        " outside " + t.slices_.to_string());
    }
    if (counts[k] == 0 && sums[k] != 0.0) {
      throw FormatError("contribution table has a nonzero sum with zero count");
    }
  }
  t.samples_drawn_ = samples_drawn;
  t.sums_ = std::move(sums);
  t.counts_ = std::move(counts);
  return t;
}

ContributionTable merge_tables(const ContributionTable& a, const ContributionTable& b) {
  if (a.n() != b.n() || !(a.slices() == b.slices())) {
    throw ConfigError("cannot merge tables: n=" + std::to_string(a.n()) + " H=" +
                      a.slices().to_string() + " vs n=" + std::to_string(b.n()) + " H=" +
                      b.slices().to_string());
  }
  if (!(a.options() == b.options())) {
    throw ConfigError("cannot merge tables sampled with different options");
  }
  std::vector<double> sums(a.sums().begin(), a.sums().end());
  std::vector<std::uint64_t> counts(a.counts().begin(), a.counts().end());
  for (std::size_t k = 0; k < sums.size(); ++k) {
    sums[k] += b.sums()[k];
    counts[k] += b.counts()[k];
  }
  return ContributionTable::FromRaw(a.n(), a.slices(), a.seed(), a.options(),
                                    a.samples_drawn() + b.samples_drawn(), std::move(sums),
                                    std::move(counts));
}

// --- Sampling -------------------------------------------------------------

namespace {

constexpr std::uint64_t kSliceOrderStream = 0x51ce;
constexpr std::uint64_t kBlockStream = 0xb10c;
constexpr std::uint64_t kIidStream = 0x11d;

void partial_shuffle(std::vector<int>& perm, int prefix, SplitMix64& rng) {
  const int n = static_cast<int>(perm.size());
  for (int r = 0; r < prefix && r < n - 1; ++r) {
    const int pick = r + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - r)));
    std::swap(perm[r], perm[pick]);
  }
}

std::vector<int> identity(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

SampleSchedule::SampleSchedule(int n, SliceSet slices, std::uint64_t seed,
                               SamplingOptions options)
    : n_(n), slices_(std::move(slices)), seed_(seed), options_(options) {}

SampleDraw SampleSchedule::draw(std::uint64_t k) {
  return options_.schedule == SliceSchedule::kRoundRobin ? draw_round_robin(k) : draw_iid(k);
}

SampleDraw SampleSchedule::draw_round_robin(std::uint64_t k) {
  const auto h = static_cast<std::uint64_t>(slices_.size());
  const std::uint64_t epoch = k / h;
  const auto position = static_cast<int>(k % h);

  std::vector<int> order = identity(slices_.size());
  SplitMix64 order_rng(derive_seed(seed_, kSliceOrderStream, epoch));
  partial_shuffle(order, position + 1, order_rng);
  const int slice = slices_.sizes()[order[position]];

  // `epoch` is also the occurrence index of `slice`.
  const auto blocks = static_cast<std::uint64_t>((n_ + slice - 1) / slice);
  const std::uint64_t block_epoch = epoch / blocks;
  const auto block = static_cast<int>(epoch % blocks);
  if (cached_slice_ != slice || cached_epoch_ != block_epoch || cached_perm_.empty()) {
    cached_perm_ = identity(n_);
    SplitMix64 perm_rng(derive_seed(seed_, kBlockStream + static_cast<std::uint64_t>(slice),
                                    block_epoch));
    partial_shuffle(cached_perm_, n_, perm_rng);
    cached_slice_ = slice;
    cached_epoch_ = block_epoch;
  }
  SampleDraw out{slice, {}};
  out.members.reserve(slice);
  for (int r = 0; r < slice; ++r) {
    out.members.push_back(cached_perm_[(block * slice + r) % n_]);
  }
  return out;
}

SampleDraw SampleSchedule::draw_iid(std::uint64_t k) {
  SplitMix64 rng(derive_seed(seed_, kIidStream, k));
  const int slice = slices_.sizes()[rng.below(static_cast<std::uint64_t>(slices_.size()))];
  std::vector<int> perm = identity(n_);
  partial_shuffle(perm, slice, rng);
  perm.resize(slice);
  return SampleDraw{slice, std::move(perm)};
}

void apply_sample(const UtilityOracle& oracle, std::span<const int> permutation, int slice,
                  ContributionTable& table) {
  const int n = table.n();
  if (oracle.n() != n) {
    throw ConfigError("table has n=" + std::to_string(n) + ", oracle has n=" +
                      std::to_string(oracle.n()));
  }
  if (slice < 1 || slice > n || static_cast<int>(permutation.size()) < slice) {
    throw ConfigError("invalid slice " + std::to_string(slice));
  }
  const auto members = permutation.first(static_cast<std::size_t>(slice));
  const CoalitionMask s = CoalitionMask::FromMembers(n, members);
  const CoalitionMask rest = s.complement();
  const double u = oracle.utility(s) - oracle.utility(rest);
  for (int p : members) table.credit(p, slice, u);
  if (table.options().mirror_credit && n - slice >= 1 && table.slices().contains(n - slice)) {
    for (int p : rest.members()) table.credit(p, n - slice, -u);
  }
  table.record_sample();
}

void sample_once(const UtilityOracle& oracle, SplitMix64& rng, ContributionTable& table) {
  const auto& sizes = table.slices().sizes();
  const int slice = sizes[rng.below(sizes.size())];
  std::vector<int> perm = identity(table.n());
  partial_shuffle(perm, slice, rng);
  apply_sample(oracle, perm, slice, table);
}

namespace {

void run_range(const UtilityOracle& oracle, ContributionTable& table, std::uint64_t first,
               std::uint64_t count) {
  SampleSchedule schedule(table.n(), table.slices(), table.seed(), table.options());
  for (std::uint64_t k = first; k < first + count; ++k) {
    const SampleDraw d = schedule.draw(k);
    apply_sample(oracle, d.members, d.slice, table);
  }
}

}  // namespace

void run_samples(const UtilityOracle& oracle, ContributionTable& table, std::uint64_t count,
                 int workers) {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  const std::uint64_t first = table.samples_drawn();
  if (workers == 1 || count < 2) {
    run_range(oracle, table, first, count);
    return;
  }
  const auto w = static_cast<std::uint64_t>(std::min<std::uint64_t>(workers, count));
  std::vector<ContributionTable> parts;
  parts.reserve(w);
  for (std::uint64_t k = 0; k < w; ++k) {
    parts.emplace_back(table.n(), table.slices(), table.seed(), table.options());
  }
  std::vector<std::exception_ptr> failures(w);
  {
    std::vector<std::jthread> threads;
    std::uint64_t begin = first;
    for (std::uint64_t k = 0; k < w; ++k) {
      const std::uint64_t chunk = count / w + (k < count % w ? 1 : 0);
      threads.emplace_back([&, k, begin, chunk] {
        try {
          run_range(oracle, parts[k], begin, chunk);
        } catch (...) {
          failures[k] = std::current_exception();
        }
      });
      begin += chunk;
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  for (const auto& part : parts) table = merge_tables(table, part);
}

std::uint64_t min_samples_for_coverage(int n, const SliceSet& slices) {
  int most_blocks = 1;
  for (int j : slices.sizes()) most_blocks = std::max(most_blocks, (n + j - 1) / j);
  return static_cast<std::uint64_t>(slices.size()) * most_blocks;
}

SsvEstimate finalize(const ContributionTable& table, std::uint64_t oracle_evaluations) {
  const int n = table.n();
  const auto& sizes = table.slices().sizes();
  SsvEstimate est{std::vector<double>(n, 0.0),
                  std::vector<std::vector<double>>(n, std::vector<double>(sizes.size())),
                  table.samples_drawn(),
                  oracle_evaluations,
                  table.slices(),
                  table.seed()};
  std::string missing;
  int missing_count = 0;
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (std::size_t h = 0; h < sizes.size(); ++h) {
      const std::uint64_t c = table.count(i, sizes[h]);
      if (c == 0) {
        if (missing_count++ < 8) {
          missing += " (p" + std::to_string(i + 1) + ", j=" + std::to_string(sizes[h]) + ")";
        }
        continue;
      }
      est.per_slice_means[i][h] = table.sum(i, sizes[h]) / static_cast<double>(c);
      total += est.per_slice_means[i][h];
    }
    est.values[i] = total / static_cast<double>(sizes.size());
  }
  if (missing_count > 0) {
    throw ConfigError("estimate refused: " + std::to_string(missing_count) +
                      " (player, slice) cells have no samples after " +
                      std::to_string(table.samples_drawn()) + " samples:" + missing +
                      (missing_count > 8 ? " ..." : ""));
  }
  return est;
}

SsvEstimate estimate_ssv(const UtilityOracle& oracle, const SliceSet& slices,
                         std::uint64_t samples, std::uint64_t seed, int workers,
                         SamplingOptions options) {
  const int n = oracle.n();
  if (samples < 1) throw ConfigError("sample count must be >= 1");
  if (samples < static_cast<std::uint64_t>(slices.size())) {
    throw ConfigError("sample count " + std::to_string(samples) +
                      " cannot cover " + std::to_string(slices.size()) + " slices");
  }
  if (options.schedule == SliceSchedule::kRoundRobin) {
    const std::uint64_t need = min_samples_for_coverage(n, slices);
    if (samples < need) {
      throw ConfigError("round-robin coverage of n=" + std::to_string(n) + ", H=" +
                        slices.to_string() + " needs at least " + std::to_string(need) +
                        " samples, got " + std::to_string(samples));
    }
  }
  ContributionTable table(n, slices, seed, options);
  const std::uint64_t before = oracle.evaluations();
  run_samples(oracle, table, samples, workers);
  return finalize(table, oracle.evaluations() - before);
}

// --- Convergence ----------------------------------------------------------

namespace {
void check_comparable(const SsvEstimate& a, const SsvEstimate& b) {
  if (a.values.size() != b.values.size() || !(a.slice_set == b.slice_set)) {
    throw ConfigError("estimates have different configurations (n=" +
                      std::to_string(a.values.size()) + " H=" + a.slice_set.to_string() +
                      " vs n=" + std::to_string(b.values.size()) + " H=" +
                      b.slice_set.to_string() + ")");
  }
  if (a.values.empty()) throw ConfigError("empty estimate");
}
}  // namespace

double mae(const SsvEstimate& a, const SsvEstimate& b) {
  check_comparable(a, b);
  double total = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) total += std::abs(a.values[i] - b.values[i]);
  return total / static_cast<double>(a.values.size());
}

bool converged(double mae_value, int n) { return mae_value < 1.0 / n; }

bool converged(const SsvEstimate& a, const SsvEstimate& b) {
  return converged(mae(a, b), static_cast<int>(a.values.size()));
}

SsvEstimate average(const SsvEstimate& a, const SsvEstimate& b) {
  check_comparable(a, b);
  SsvEstimate out = a;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    out.values[i] = 0.5 * (a.values[i] + b.values[i]);
    for (std::size_t h = 0; h < a.per_slice_means[i].size(); ++h) {
      out.per_slice_means[i][h] = 0.5 * (a.per_slice_means[i][h] + b.per_slice_means[i][h]);
    }
  }
  out.total_samples = a.total_samples + b.total_samples;
  out.oracle_evaluations = a.oracle_evaluations + b.oracle_evaluations;
  return out;
}

std::uint64_t required_samples(double epsilon, double delta, int slice_count,
                               double utility_range, int n) {
  if (!(epsilon > 0)) throw ConfigError("epsilon must be > 0");
  if (!(delta > 0 && delta < 1)) throw ConfigError("delta must lie in (0, 1)");
  if (slice_count < 1) throw ConfigError("slice count must be >= 1");
  if (!(utility_range > 0)) throw ConfigError("utility range must be > 0");
  if (n < 1) throw ConfigError("n must be >= 1");
  const double h = slice_count;
  const double m = 2.0 * h * utility_range * utility_range *
                   std::log(2.0 * h * n / delta) / (epsilon * epsilon);
  return static_cast<std::uint64_t>(std::ceil(m));
}

}  // namespace cokv
