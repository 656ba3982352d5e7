#include "cokv/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "cokv/exact.hpp"
#include "cokv/export.hpp"
#include "cokv/oracle_bridge.hpp"
#include "cokv/table_io.hpp"

namespace cokv {

using nlohmann::json;

int exit_code_for(const Error& error) {
  switch (error.kind()) {
    case Error::Kind::kConfig:
    case Error::Kind::kCapability: return kExitConfig;
    case Error::Kind::kEvaluation: return kExitOracle;
    case Error::Kind::kFormat: return kExitFormat;
    case Error::Kind::kConvergence: return kExitNotConverged;
    case Error::Kind::kVerification: return kExitVerification;
  }
  return kExitInternal;
}

// --- RunConfig ----------------------------------------------------------------

RunConfig parse_run_config(const std::string& json_text) {
  RunConfig c;
  try {
    const json doc = json::parse(json_text);
    if (doc.contains("game")) c.game = parse_game_spec(doc.at("game").dump());
    c.cache_path = doc.value("cache", c.cache_path);
    if (doc.contains("slice_set")) c.slice_sizes = doc.at("slice_set").get<std::vector<int>>();
    c.samples = doc.value("samples", c.samples);
    c.seed = doc.value("seed", c.seed);
    c.workers = doc.value("workers", c.workers);
    if (doc.contains("alpha")) {
      const json& a = doc.at("alpha");
      c.alphas = a.is_array() ? a.get<std::vector<int>>() : std::vector<int>{a.get<int>()};
    }
    c.budget = doc.value("budget", c.budget);
    c.window = doc.value("window", c.window);
    c.kernel = doc.value("kernel", c.kernel);
    const std::string schedule = doc.value("schedule", std::string("round-robin"));
    if (schedule == "iid") {
      c.sampling.schedule = SliceSchedule::kIid;
    } else if (schedule != "round-robin") {
      throw ConfigError("schedule must be 'round-robin' or 'iid'");
    }
    c.sampling.mirror_credit = doc.value("mirror_credit", false);
    c.checkpoint = doc.value("checkpoint", c.checkpoint);
    c.resume = doc.value("resume", c.resume);
    c.run_to_cap = doc.value("run_to_cap", c.run_to_cap);
    c.out_dir = doc.value("out", c.out_dir.string());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid run config: ") + e.what());
  }
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  json doc;
  if (c.game) doc["game"] = json::parse(game_spec_to_json(*c.game));
  doc["cache"] = c.cache_path;
  doc["slice_set"] = c.slice_sizes;
  doc["samples"] = c.samples;
  doc["seed"] = c.seed;
  doc["workers"] = c.workers;
  doc["alpha"] = c.alphas;
  doc["budget"] = c.budget;
  doc["window"] = c.window;
  doc["kernel"] = c.kernel;
  doc["schedule"] = c.sampling.schedule == SliceSchedule::kIid ? "iid" : "round-robin";
  doc["mirror_credit"] = c.sampling.mirror_credit;
  doc["checkpoint"] = c.checkpoint;
  doc["resume"] = c.resume;
  doc["run_to_cap"] = c.run_to_cap;
  doc["out"] = c.out_dir.string();
  return doc.dump();
}

SliceSet resolve_slices(const RunConfig& config, int n) {
  if (!config.slice_sizes.empty()) return SliceSet(config.slice_sizes, n);
  if (n >= 128) return SliceSet({32, 64, 96, 128}, n);
  return SliceSet::All(n);
}

void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                    const RunConfig& config, const std::vector<std::string>& outputs,
                    int status) {
  json doc{{"command", command},
           {"status", status},
           {"config", json::parse(run_config_to_json(config))},
           {"outputs", outputs}};
  write_text(out_dir / ("manifest-" + command + ".json"), doc.dump(2) + "\n");
}

// --- estimate -----------------------------------------------------------------

namespace {

constexpr std::uint64_t kDefaultSampleCap = 50000;
constexpr std::uint64_t kSecondRunStream = 0xB;

std::optional<SsvEstimate> try_finalize(const ContributionTable& table, std::uint64_t evals) {
  try {
    return finalize(table, evals);
  } catch (const ConfigError&) {
    return std::nullopt;  // some cell still uncovered
  }
}

}  // namespace

EstimateReport cmd_estimate(const RunConfig& config) {
  if (!config.game) throw ConfigError("estimate needs a game");
  if (config.workers < 1) throw ConfigError("workers must be >= 1");
  OracleStack stack(*config.game, config.cache_path);
  const UtilityOracle& oracle = stack.oracle();
  const int n = oracle.n();
  const PlayerSet players = config.game->players();
  const SliceSet slices = resolve_slices(config, n);
  const std::uint64_t cap = config.samples ? config.samples : kDefaultSampleCap;
  const std::uint64_t step =
      config.checkpoint ? config.checkpoint : std::max<std::uint64_t>(100, cap / 50);

  std::filesystem::create_directories(config.out_dir);
  const auto path_a = config.out_dir / "table_a.bin";
  const auto path_b = config.out_dir / "table_b.bin";
  const std::uint64_t seed_b = derive_seed(config.seed, kSecondRunStream);
  ContributionTable table_a(n, slices, config.seed, config.sampling);
  ContributionTable table_b(n, slices, seed_b, config.sampling);
  if (config.resume && std::filesystem::exists(path_a) && std::filesystem::exists(path_b)) {
    table_a = load_table(path_a, n, slices);
    table_b = load_table(path_b, n, slices);
    if (table_a.seed() != config.seed || table_b.seed() != seed_b ||
        !(table_a.options() == config.sampling)) {
      throw ConfigError("saved tables in " + config.out_dir.string() +
                        " were produced with a different seed or sampling mode");
    }
  }

  EstimateReport report;
  std::uint64_t evals_a = 0, evals_b = 0;
  std::optional<SsvEstimate> est_a, est_b;
  std::string log_csv = "samples_per_run,mae,threshold,converged\n";
  if (config.resume && std::filesystem::exists(config.out_dir / "convergence.csv")) {
    // Keep the checkpoints the saved tables already passed.
    const std::uint64_t drawn = std::min(table_a.samples_drawn(), table_b.samples_drawn());
    std::istringstream in(read_text(config.out_dir / "convergence.csv"));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      ConvergencePoint p;
      char comma = 0;
      std::istringstream row(line);
      if (!(row >> p.samples_per_run >> comma >> p.mae) || p.samples_per_run > drawn) continue;
      p.converged = line.ends_with(",true");
      report.log.push_back(p);
      log_csv += line + "\n";
    }
  }
  const double threshold = 1.0 / n;
  std::uint64_t first_target = step;
  if (config.sampling.schedule == SliceSchedule::kRoundRobin) {
    const std::uint64_t need = min_samples_for_coverage(n, slices);
    if (cap < need) {
      throw ConfigError("sample cap " + std::to_string(cap) + " is below the " +
                        std::to_string(need) + " samples needed to cover every (player, slice)");
    }
    first_target = std::max(first_target, need);
  }
  // A kill between saving the tables and logging leaves a checkpoint without its row.
  bool relog = config.resume && table_a.samples_drawn() == table_b.samples_drawn() &&
               table_a.samples_drawn() >= first_target &&
               (report.log.empty() || report.log.back().samples_per_run < table_a.samples_drawn());
  const auto log_path = config.out_dir / "convergence.csv";
  for (;;) {
    const std::uint64_t drawn = std::min(table_a.samples_drawn(), table_b.samples_drawn());
    std::uint64_t target = std::min(cap, std::max(first_target, drawn + step));
    if (drawn >= cap || relog) target = drawn;
    relog = false;
    for (auto [table, evals] : {std::pair{&table_a, &evals_a}, std::pair{&table_b, &evals_b}}) {
      if (table->samples_drawn() < target) {
        const std::uint64_t before = oracle.evaluations();
        run_samples(oracle, *table, target - table->samples_drawn(), config.workers);
        *evals += oracle.evaluations() - before;
      }
    }
    save_table(table_a, path_a);
    save_table(table_b, path_b);
    est_a = try_finalize(table_a, evals_a);
    est_b = try_finalize(table_b, evals_b);
    if (est_a && est_b) {
      const double m = mae(*est_a, *est_b);
      const bool ok = converged(m, n);
      report.log.push_back({target, m, ok});
      log_csv += std::to_string(target) + "," + format_double(m) + "," +
                 format_double(threshold) + "," + (ok ? "true" : "false") + "\n";
      report.converged = ok;
      write_text(log_path.string() + ".tmp", log_csv);
      std::filesystem::rename(log_path.string() + ".tmp", log_path);
      if (ok && !config.run_to_cap) break;
    }
    if (target >= cap) break;
  }

  std::vector<std::string> outputs{"table_a.bin", "table_b.bin", "convergence.csv"};
  write_text(log_path, log_csv);
  if (est_a && est_b) {
    report.run_a = est_a;
    report.run_b = est_b;
    report.averaged = average(*est_a, *est_b);
    write_text(config.out_dir / "estimate_a.csv", values_csv(players, est_a->values, "ssv"));
    write_text(config.out_dir / "estimate_a.json", estimate_json(players, *est_a));
    write_text(config.out_dir / "estimate_b.csv", values_csv(players, est_b->values, "ssv"));
    write_text(config.out_dir / "estimate_b.json", estimate_json(players, *est_b));
    write_text(config.out_dir / "ssv.csv", values_csv(players, report.averaged->values, "ssv"));
    write_text(config.out_dir / "ssv.json", estimate_json(players, *report.averaged));
    outputs.insert(outputs.end(), {"estimate_a.csv", "estimate_a.json", "estimate_b.csv",
                                   "estimate_b.json", "ssv.csv", "ssv.json"});
  }
  write_manifest(config.out_dir, "estimate", config, outputs,
                 report.converged ? kExitOk : kExitNotConverged);
  return report;
}

// --- verify -------------------------------------------------------------------

std::string VerificationReport::to_json() const {
  return json{{"n", n},
              {"games", games},
              {"max_equivalence_error", max_equivalence_error},
              {"max_efficiency_error", max_efficiency_error},
              {"max_slice_error", max_slice_error},
              {"max_antisymmetry_error", max_antisymmetry_error},
              {"symmetry_exact", symmetry_exact},
              {"null_player_exact", null_player_exact},
              {"tolerance", kExactTolerance},
              {"passed", passed}}
      .dump(2) +
         "\n";
}

VerificationReport cmd_verify(int n, std::uint64_t seed, int games) {
  if (n < 1) throw ConfigError("verify needs n >= 1");
  if (n > kMaxVerifyPlayers) {
    throw CapabilityError("verify supports at most " + std::to_string(kMaxVerifyPlayers) +
                          " players, got " + std::to_string(n));
  }
  if (games < 1) throw ConfigError("verify needs at least one game");
  VerificationReport r;
  r.n = n;
  r.games = games;
  const CoalitionMask full = CoalitionMask::Full(n);
  const CoalitionMask none(n);
  for (int g = 0; g < games; ++g) {
    const std::uint64_t game_seed = derive_seed(seed, static_cast<std::uint64_t>(g));
    RandomGame game(n, game_seed);
    const auto sv = exact::shapley(game);
    const auto cc = exact::shapley_cc(game);
    const auto slices = exact::slice_values(game);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      r.max_equivalence_error = std::max(r.max_equivalence_error, std::abs(sv[i] - cc[i]));
      total += sv[i];
    }
    r.max_efficiency_error = std::max(
        r.max_efficiency_error, std::abs(total - (game.utility(full) - game.utility(none))));
    // Spot-check single-slice enumeration against the batched table.
    const int player = g % n;
    for (int j = 1; j <= n; ++j) {
      r.max_slice_error = std::max(
          r.max_slice_error, std::abs(exact::slice_value(game, player, j) - slices[player][j - 1]));
    }
    for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << n); ++bits) {
      const auto s = CoalitionMask::FromBits(n, bits);
      r.max_antisymmetry_error =
          std::max(r.max_antisymmetry_error, std::abs(complementary_contribution(game, s) +
                                                      complementary_contribution(game, s.complement())));
    }

    // Symmetric family: all players bit-identical.
    SplitMix64 rng(derive_seed(game_seed, 1));
    std::vector<double> by_size(n + 1);
    for (auto& v : by_size) v = rng.unit();
    SymmetricGame sym(by_size);
    for (const auto& values : {exact::shapley(sym), exact::shapley_cc(sym)}) {
      for (double v : values) r.symmetry_exact &= v == values.front();
    }

    // Additive family with a duplicated weight and a null player.
    std::vector<double> weights(n);
    for (auto& w : weights) w = static_cast<double>(rng.below(16)) / 8.0;
    if (n >= 2) weights[1] = weights[0];
    weights[n - 1] = 0.0;
    AdditiveGame add(weights);
    const auto add_sv = exact::shapley(add);
    if (n >= 3) r.symmetry_exact &= add_sv[0] == add_sv[1];
    r.null_player_exact &= add_sv[n - 1] == 0.0;
  }
  r.passed = r.max_equivalence_error <= kExactTolerance &&
             r.max_efficiency_error <= kExactTolerance && r.max_slice_error <= kExactTolerance &&
             r.max_antisymmetry_error == 0.0 && r.symmetry_exact && r.null_player_exact;
  return r;
}

// --- allocate -----------------------------------------------------------------

std::vector<AllocationRun> cmd_allocate(const std::vector<std::string>& labels,
                                        const std::vector<double>& scores,
                                        const RunConfig& config) {
  if (config.alphas.empty()) throw ConfigError("allocate needs at least one alpha");
  std::vector<PlayerLabel> player_labels;
  for (const auto& l : labels) player_labels.push_back(PlayerLabel::Opaque(l));
  const PlayerSet players(player_labels);
  if (players.size() != static_cast<int>(scores.size())) {
    throw ConfigError("label and score counts differ");
  }
  for (int alpha : config.alphas) {
    if (alpha < 0 || alpha >= players.size()) {
      throw ConfigError("alpha " + std::to_string(alpha) + " invalid for " +
                        std::to_string(players.size()) + " heads");
    }
  }
  std::vector<AllocationRun> runs;
  std::vector<std::string> outputs;
  for (int alpha : config.alphas) {
    AllocationConfig ac{config.budget, config.window, alpha};
    AllocationRun run{alpha, allocate_from_scores(scores, ac)};
    const std::string stem = "plan_alpha" + std::to_string(alpha);
    write_text(config.out_dir / (stem + ".csv"), plan_csv(players, run.plan));
    write_text(config.out_dir / (stem + ".json"), plan_json(players, run.plan, alpha));
    outputs.push_back(stem + ".csv");
    outputs.push_back(stem + ".json");
    runs.push_back(std::move(run));
  }
  write_manifest(config.out_dir, "allocate", config, outputs, kExitOk);
  return runs;
}

// --- evict --------------------------------------------------------------------

std::vector<HeadDiagnostics> cmd_evict(const std::vector<HeadTensorBundle>& heads,
                                       const std::vector<std::int64_t>& cache_sizes,
                                       const PoolingConfig& pooling,
                                       const std::filesystem::path& out_dir) {
  if (cache_sizes.size() < heads.size()) {
    throw ConfigError("plan covers " + std::to_string(cache_sizes.size()) + " heads, tensor file has " +
                      std::to_string(heads.size()));
  }
  std::vector<HeadDiagnostics> out;
  json results = json::array();
  std::string csv = "head,cache_size,retained_rows,min_retained_mass,mean_retained_mass\n";
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const auto& bundle = heads[h];
    const EvictionResult result = evict(bundle, cache_sizes[h], pooling);
    HeadDiagnostics d;
    d.head = static_cast<int>(h);
    d.cache_size = cache_sizes[h];
    d.retained_rows = result.k_hat.rows();
    d.retained_prefix_indices = result.retained_prefix_indices;
    d.min_retained_mass = 1.0;
    double total = 0.0;
    for (int q = 0; q < bundle.window(); ++q) {
      const double mass = retained_attention_mass(bundle, result, bundle.q_win.row(q));
      d.min_retained_mass = std::min(d.min_retained_mass, mass);
      total += mass;
    }
    d.mean_retained_mass = total / bundle.window();
    results.push_back({{"head", d.head},
                       {"cache_size", d.cache_size},
                       {"retained_rows", d.retained_rows},
                       {"retained_prefix_indices", d.retained_prefix_indices},
                       {"scores", result.scores},
                       {"min_retained_mass", d.min_retained_mass},
                       {"mean_retained_mass", d.mean_retained_mass}});
    csv += std::to_string(d.head) + "," + std::to_string(d.cache_size) + "," +
           std::to_string(d.retained_rows) + "," + format_double(d.min_retained_mass) + "," +
           format_double(d.mean_retained_mass) + "\n";
    out.push_back(std::move(d));
  }
  write_text(out_dir / "evict.json",
             json{{"kernel", pooling.kernel}, {"heads", results}}.dump(2) + "\n");
  write_text(out_dir / "evict.csv", csv);
  return out;
}

// --- mask experiment ----------------------------------------------------------

namespace {
const char* policy_name(MaskPolicy p) { return p == MaskPolicy::kTop ? "top" : "low"; }
}  // namespace

std::vector<int> ranked_players(const std::vector<double>& scores, MaskPolicy policy, int k) {
  const int n = static_cast<int>(scores.size());
  if (k < 0 || k > n) throw ConfigError("k out of range");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Best first; equal scores put the lower index first.
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  std::vector<int> picked;
  if (policy == MaskPolicy::kTop) {
    picked.assign(order.begin(), order.begin() + k);
  } else {
    picked.assign(order.end() - k, order.end());
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

MaskExperimentReport cmd_mask_experiment(const UtilityOracle& oracle,
                                         const std::vector<double>& scores,
                                         const std::vector<int>& ks) {
  const int n = oracle.n();
  if (static_cast<int>(scores.size()) != n) {
    throw ConfigError("scores cover " + std::to_string(scores.size()) + " players, game has " +
                      std::to_string(n));
  }
  std::vector<int> sorted_ks = ks;
  std::sort(sorted_ks.begin(), sorted_ks.end());
  for (int k : sorted_ks) {
    if (k < 0 || k >= n) {
      throw ConfigError("k=" + std::to_string(k) + " must lie in [0, " + std::to_string(n) + ")");
    }
  }
  MaskExperimentReport report;
  report.baseline = oracle.utility(CoalitionMask::Full(n));
  for (int k : sorted_ks) {
    for (MaskPolicy policy : {MaskPolicy::kTop, MaskPolicy::kLow}) {
      MaskRow row{k, policy, ranked_players(scores, policy, k), 0.0};
      row.utility = oracle.utility(CoalitionMask::FromMembers(n, row.masked_players).complement());
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

std::string MaskExperimentReport::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"k", r.k},
                         {"policy", policy_name(r.policy)},
                         {"masked_players", r.masked_players},
                         {"utility", r.utility}});
  }
  return json{{"baseline", baseline}, {"rows", rows_json}}.dump(2) + "\n";
}

std::string MaskExperimentReport::to_csv() const {
  std::string out = "k,policy,masked_players,utility,baseline\n";
  for (const auto& r : rows) {
    std::string masked;
    for (std::size_t t = 0; t < r.masked_players.size(); ++t) {
      if (t) masked += ";";
      masked += std::to_string(r.masked_players[t]);
    }
    out += std::to_string(r.k) + "," + policy_name(r.policy) + "," + masked + "," +
           format_double(r.utility) + "," + format_double(baseline) + "\n";
  }
  return out;
}

MaskExperimentReport MaskExperimentReport::from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    MaskExperimentReport r;
    r.baseline = doc.at("baseline").get<double>();
    for (const auto& row : doc.at("rows")) {
      const std::string policy = row.at("policy").get<std::string>();
      if (policy != "top" && policy != "low") throw FormatError("unknown policy " + policy);
      r.rows.push_back(MaskRow{row.at("k").get<int>(),
                               policy == "top" ? MaskPolicy::kTop : MaskPolicy::kLow,
                               row.at("masked_players").get<std::vector<int>>(),
                               row.at("utility").get<double>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid mask report: ") + e.what());
  }
}

// --- convergence study --------------------------------------------------------

std::vector<ConvergenceRow> convergence_study(const UtilityOracle& oracle, const SliceSet& slices,
                                              const std::vector<std::uint64_t>& sample_grid,
                                              int repeats, std::uint64_t seed, int workers,
                                              SamplingOptions options) {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  std::vector<ConvergenceRow> rows;
  for (std::uint64_t m : sample_grid) {
    std::vector<double> maes;
    for (int r = 0; r < repeats; ++r) {
      const auto rr = static_cast<std::uint64_t>(r);
      const auto a = estimate_ssv(oracle, slices, m, derive_seed(seed, 2 * rr, m), workers, options);
      const auto b = estimate_ssv(oracle, slices, m, derive_seed(seed, 2 * rr + 1, m), workers, options);
      maes.push_back(mae(a, b));
    }
    std::sort(maes.begin(), maes.end());
    const std::size_t mid = maes.size() / 2;
    const double median = maes.size() % 2 ? maes[mid] : 0.5 * (maes[mid - 1] + maes[mid]);
    rows.push_back({m, median, maes.front(), maes.back(), converged(median, oracle.n())});
  }
  return rows;
}

std::string convergence_csv(const std::vector<ConvergenceRow>& rows, int n) {
  std::string out = "samples,median_mae,min_mae,max_mae,threshold,converged\n";
  for (const auto& r : rows) {
    out += std::to_string(r.samples) + "," + format_double(r.median_mae) + "," +
           format_double(r.min_mae) + "," + format_double(r.max_mae) + "," +
           format_double(1.0 / n) + "," + (r.converged ? "true" : "false") + "\n";
  }
  return out;
}

}  // namespace cokv
