#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cokv/allocation.hpp"
#include "cokv/eviction.hpp"
#include "cokv/game.hpp"
#include "cokv/ssv.hpp"

namespace cokv {

// Process exit statuses of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,
  kExitNotConverged = 3,
  kExitOracle = 4,
  kExitVerification = 5,
  kExitFormat = 6,
};

int exit_code_for(const Error& error);

// Everything a run needs. Loaded from one JSON document; command-line flags
// override the file.
struct RunConfig {
  std::optional<GameSpec> game;
  std::string cache_path;        // evaluation journal; empty disables caching
  std::vector<int> slice_sizes;  // empty: {32,64,96,128} when n >= 128, else 1..n
  std::uint64_t samples = 0;     // per-run sample cap; 0 picks 50,000
  std::uint64_t seed = 0;
  int workers = 1;
  std::vector<int> alphas{1};
  std::int64_t budget = 0;
  std::int64_t window = 8;
  int kernel = 7;
  SamplingOptions sampling;
  std::uint64_t checkpoint = 0;  // 0: max(100, samples / 50)
  bool run_to_cap = false;       // keep sampling after the MAE rule fires
  bool resume = false;
  std::filesystem::path out_dir = "run";
};

RunConfig parse_run_config(const std::string& json_text);
std::string run_config_to_json(const RunConfig& config);

SliceSet resolve_slices(const RunConfig& config, int n);

// --- estimate ----------------------------------------------------------------

struct ConvergencePoint {
  std::uint64_t samples_per_run = 0;
  double mae = 0.0;
  bool converged = false;
};

struct EstimateReport {
  // Empty when the cap was reached before every cell was covered.
  std::optional<SsvEstimate> run_a;
  std::optional<SsvEstimate> run_b;
  std::optional<SsvEstimate> averaged;
  std::vector<ConvergencePoint> log;
  bool converged = false;
};

// Two independently seeded runs checked at periodic checkpoints; stops once
// their MAE drops below 1/n (unless run_to_cap) or the cap is reached. Writes estimate_{a,b},
// ssv (the average of the two runs) as CSV and JSON, both tables,
// convergence.csv and manifest-estimate.json under out_dir. With config.resume,
// existing tables in out_dir are continued.
EstimateReport cmd_estimate(const RunConfig& config);

// --- verify ------------------------------------------------------------------

struct VerificationReport {
  int n = 0;
  int games = 0;
  double max_equivalence_error = 0.0;  // |Shapley - complementary form|
  double max_efficiency_error = 0.0;   // |sum SV - (U(N) - U(empty))|
  double max_slice_error = 0.0;        // per-slice vs batched enumeration
  double max_antisymmetry_error = 0.0;
  bool symmetry_exact = true;
  bool null_player_exact = true;
  bool passed = false;
  std::string to_json() const;
};

inline constexpr int kMaxVerifyPlayers = 10;
inline constexpr double kExactTolerance = 1e-9;

VerificationReport cmd_verify(int n, std::uint64_t seed, int games);

// --- allocate ----------------------------------------------------------------

struct AllocationRun {
  int alpha;
  AllocationPlan plan;
};

// One plan per alpha, written as plan_alpha<k>.{csv,json}.
std::vector<AllocationRun> cmd_allocate(const std::vector<std::string>& labels,
                                        const std::vector<double>& scores,
                                        const RunConfig& config);

// --- evict -------------------------------------------------------------------

struct HeadDiagnostics {
  int head = 0;
  std::int64_t cache_size = 0;
  int retained_rows = 0;
  std::vector<int> retained_prefix_indices;
  double min_retained_mass = 0.0;   // over window-query probes
  double mean_retained_mass = 0.0;
};

// Evicts every head of a tensor file with the plan's cache sizes (head h uses
// entry h) and writes evict.json and evict.csv.
std::vector<HeadDiagnostics> cmd_evict(const std::vector<HeadTensorBundle>& heads,
                                       const std::vector<std::int64_t>& cache_sizes,
                                       const PoolingConfig& pooling,
                                       const std::filesystem::path& out_dir);

// --- mask experiment ---------------------------------------------------------

enum class MaskPolicy { kTop, kLow };

struct MaskRow {
  int k = 0;
  MaskPolicy policy = MaskPolicy::kTop;
  std::vector<int> masked_players;
  double utility = 0.0;
};

struct MaskExperimentReport {
  double baseline = 0.0;  // U(N)
  std::vector<MaskRow> rows;  // sorted by k, then top before low

  std::string to_json() const;
  std::string to_csv() const;
  static MaskExperimentReport from_json(const std::string& text);
};

// The k players ranked highest (kTop) or lowest (kLow) by score. Equal
// scores rank the lower index higher.
std::vector<int> ranked_players(const std::vector<double>& scores, MaskPolicy policy, int k);

// For every k and both policies evaluates U(N \ masked).
MaskExperimentReport cmd_mask_experiment(const UtilityOracle& oracle,
                                         const std::vector<double>& scores,
                                         const std::vector<int>& ks);

// --- convergence report ------------------------------------------------------

struct ConvergenceRow {
  std::uint64_t samples = 0;
  double median_mae = 0.0;
  double min_mae = 0.0;
  double max_mae = 0.0;
  bool converged = false;  // median below 1/n
};

// For each sample count, `repeats` pairs of independent runs; reports the MAE
// distribution between the pair members.
std::vector<ConvergenceRow> convergence_study(const UtilityOracle& oracle, const SliceSet& slices,
                                              const std::vector<std::uint64_t>& sample_grid,
                                              int repeats, std::uint64_t seed, int workers,
                                              SamplingOptions options = {});

std::string convergence_csv(const std::vector<ConvergenceRow>& rows, int n);

// Writes manifest-<command>.json describing a finished command.
void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const RunConfig& config, const std::vector<std::string>& outputs,
                    int status);

}  // namespace cokv
