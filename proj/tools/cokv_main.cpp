// cokv: head-importance estimation, cache budgeting and eviction runs.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"

#include "cokv/export.hpp"
#include "cokv/harness.hpp"
#include "cokv/oracle_bridge.hpp"
#include "cokv/tensor_io.hpp"

namespace {

using namespace cokv;

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string::npos) end = text.size();
    const std::string item = text.substr(pos, end - pos);
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("not an integer list: " + text);
    }
    pos = end + 1;
  }
  return out;
}

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
  CLI::Option* out_opt = nullptr;
};

// File values first, then any flag given on the command line.
RunConfig base_config(const Globals& g) {
  RunConfig c;
  if (!g.config_path.empty()) c = parse_run_config(read_text(g.config_path));
  if (g.seed_opt->count()) c.seed = g.seed;
  if (g.workers_opt->count()) c.workers = g.workers;
  if (g.out_opt->count()) c.out_dir = g.out;
  return c;
}

GameSpec load_game(const RunConfig& c, const std::string& game_path) {
  if (!game_path.empty()) return parse_game_spec(read_text(game_path));
  if (c.game) return *c.game;
  throw ConfigError("no game given (use --game or a config with a \"game\" entry)");
}

int report_error(const std::string& what, int code) {
  std::cerr << "cokv: " << what << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sliced Shapley head importance, KV budget allocation and eviction"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON run config; flags override its values");
  g.seed_opt = app.add_option("--seed", g.seed, "base seed");
  g.workers_opt = app.add_option("--workers", g.workers, "sampling threads");
  g.out_opt = app.add_option("--out", g.out, "run directory");

  // estimate
  auto* est = app.add_subcommand("estimate", "two-run SSV estimation with MAE stopping");
  est->fallthrough();
  std::string est_game, est_slices, est_schedule, est_cache;
  std::uint64_t est_samples = 0, est_checkpoint = 0;
  bool est_resume = false, est_mirror = false, est_to_cap = false;
  auto* est_samples_opt = est->add_option("--samples", est_samples, "per-run sample cap");
  auto* est_checkpoint_opt = est->add_option("--checkpoint", est_checkpoint, "samples between MAE checks");
  est->add_option("--game", est_game, "game spec JSON file");
  est->add_option("--slices", est_slices, "comma-separated coalition sizes");
  est->add_option("--schedule", est_schedule, "round-robin or iid")
      ->check(CLI::IsMember({"round-robin", "iid"}));
  est->add_option("--cache", est_cache, "evaluation journal");
  est->add_flag("--resume", est_resume, "continue tables found in the run directory");
  est->add_flag("--run-to-cap", est_to_cap, "keep sampling to the cap after convergence");
  est->add_flag("--mirror", est_mirror, "also credit complements to the mirrored slice");

  // verify
  auto* ver = app.add_subcommand("verify", "brute-force self-check on seeded random games");
  ver->fallthrough();
  int ver_n = 6, ver_games = 50;
  ver->add_option("--n", ver_n, "players (at most 10)")->capture_default_str();
  ver->add_option("--games", ver_games, "random games")->capture_default_str();

  // allocate
  auto* alc = app.add_subcommand("allocate", "turn scores into per-head cache sizes");
  alc->fallthrough();
  std::string alc_scores, alc_alphas;
  std::int64_t alc_budget = 0, alc_window = 0;
  alc->add_option("--scores", alc_scores, "scores CSV (player_index,label,ssv)")->required();
  alc->add_option("--alpha", alc_alphas, "alpha or comma-separated sweep");
  auto* alc_budget_opt = alc->add_option("--budget", alc_budget, "shared budget B");
  auto* alc_window_opt = alc->add_option("--window", alc_window, "local window s");

  // evict
  auto* evc = app.add_subcommand("evict", "evict per-head KV tensors under a plan");
  evc->fallthrough();
  std::string evc_tensors, evc_plan;
  int evc_kernel = 0;
  evc->add_option("--tensors", evc_tensors, "tensor file")->required();
  evc->add_option("--plan", evc_plan, "plan CSV or JSON")->required();
  auto* evc_kernel_opt = evc->add_option("--kernel", evc_kernel, "odd pooling width");

  // mask-experiment
  auto* msk = app.add_subcommand("mask-experiment", "mask top/low ranked players and record utility");
  msk->fallthrough();
  std::string msk_game, msk_scores, msk_ks;
  msk->add_option("--game", msk_game, "game spec JSON file");
  msk->add_option("--scores", msk_scores, "scores CSV")->required();
  msk->add_option("--k", msk_ks, "comma-separated mask counts")->required();

  // convergence-report
  auto* cvg = app.add_subcommand("convergence-report", "MAE between paired runs over a sample grid");
  cvg->fallthrough();
  std::string cvg_game, cvg_slices, cvg_grid = "500,1000,2000,5000";
  int cvg_repeats = 20;
  cvg->add_option("--game", cvg_game, "game spec JSON file");
  cvg->add_option("--slices", cvg_slices, "comma-separated coalition sizes");
  cvg->add_option("--grid", cvg_grid, "comma-separated sample counts")->capture_default_str();
  cvg->add_option("--repeats", cvg_repeats, "run pairs per grid point")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  RunConfig config;
  std::string command = app.get_subcommands().front()->get_name();
  try {
    config = base_config(g);

    if (est->parsed()) {
      config.game = load_game(config, est_game);
      if (est_samples_opt->count()) config.samples = est_samples;
      if (est_checkpoint_opt->count()) config.checkpoint = est_checkpoint;
      if (!est_slices.empty()) config.slice_sizes = parse_int_list(est_slices);
      if (!est_schedule.empty()) {
        config.sampling.schedule =
            est_schedule == "iid" ? SliceSchedule::kIid : SliceSchedule::kRoundRobin;
      }
      if (!est_cache.empty()) config.cache_path = est_cache;
      if (est_resume) config.resume = true;
      if (est_mirror) config.sampling.mirror_credit = true;
      if (est_to_cap) config.run_to_cap = true;
      const EstimateReport report = cmd_estimate(config);
      if (!report.log.empty()) {
        const auto& last = report.log.back();
        std::printf("samples/run=%llu mae=%.6g threshold=%.6g converged=%s\n",
                    static_cast<unsigned long long>(last.samples_per_run), last.mae,
                    1.0 / config.game->n, report.converged ? "true" : "false");
      }
      if (!report.converged) {
        return report_error("not converged at the sample cap; partial results in " +
                                config.out_dir.string(),
                            kExitNotConverged);
      }
      return kExitOk;
    }

    if (ver->parsed()) {
      const VerificationReport report = cmd_verify(ver_n, config.seed, ver_games);
      write_text(config.out_dir / "verify.json", report.to_json());
      const int status = report.passed ? kExitOk : kExitVerification;
      write_manifest(config.out_dir, command, config, {"verify.json"}, status);
      std::fputs(report.to_json().c_str(), stdout);
      return status;
    }

    if (alc->parsed()) {
      const ScoreColumn scores = read_scores_csv(alc_scores);
      if (!alc_alphas.empty()) config.alphas = parse_int_list(alc_alphas);
      if (alc_budget_opt->count()) config.budget = alc_budget;
      if (alc_window_opt->count()) config.window = alc_window;
      for (const auto& run : cmd_allocate(scores.labels, scores.values, config)) {
        for (const auto& w : run.plan.warnings) std::cerr << "cokv: warning: " << w << "\n";
      }
      return kExitOk;
    }

    if (evc->parsed()) {
      if (evc_kernel_opt->count()) config.kernel = evc_kernel;
      const auto heads = read_tensor_file(evc_tensors);
      const auto sizes = read_plan_cache_sizes(evc_plan);
      const auto diagnostics = cmd_evict(heads, sizes, PoolingConfig{config.kernel}, config.out_dir);
      write_manifest(config.out_dir, command, config, {"evict.json", "evict.csv"}, kExitOk);
      for (const auto& d : diagnostics) {
        std::printf("head %d: c=%lld rows=%d min_mass=%.6g\n", d.head,
                    static_cast<long long>(d.cache_size), d.retained_rows, d.min_retained_mass);
      }
      return kExitOk;
    }

    if (msk->parsed()) {
      config.game = load_game(config, msk_game);
      OracleStack stack(*config.game, config.cache_path);
      const ScoreColumn scores = read_scores_csv(msk_scores);
      const auto report = cmd_mask_experiment(stack.oracle(), scores.values, parse_int_list(msk_ks));
      write_text(config.out_dir / "mask_report.json", report.to_json());
      write_text(config.out_dir / "mask_report.csv", report.to_csv());
      write_manifest(config.out_dir, command, config, {"mask_report.json", "mask_report.csv"},
                     kExitOk);
      std::fputs(report.to_csv().c_str(), stdout);
      return kExitOk;
    }

    if (cvg->parsed()) {
      config.game = load_game(config, cvg_game);
      if (!cvg_slices.empty()) config.slice_sizes = parse_int_list(cvg_slices);
      OracleStack stack(*config.game, config.cache_path);
      const int n = stack.oracle().n();
      std::vector<std::uint64_t> grid;
      for (int m : parse_int_list(cvg_grid)) {
        if (m <= 0) throw ConfigError("grid sample counts must be positive");
        grid.push_back(static_cast<std::uint64_t>(m));
      }
      const auto rows = convergence_study(stack.oracle(), resolve_slices(config, n), grid,
                                          cvg_repeats, config.seed, config.workers, config.sampling);
      const std::string csv = convergence_csv(rows, n);
      write_text(config.out_dir / "convergence_report.csv", csv);
      write_manifest(config.out_dir, command, config, {"convergence_report.csv"}, kExitOk);
      std::fputs(csv.c_str(), stdout);
      return kExitOk;
    }
  } catch (const Error& e) {
    const int code = exit_code_for(e);
    try {
      write_manifest(config.out_dir, command, config, {}, code);
    } catch (const std::exception&) {
      // the error below is what matters
    }
    return report_error(e.what(), code);
  } catch (const std::exception& e) {
    return report_error(std::string("internal error: ") + e.what(), kExitInternal);
  }
  return kExitInternal;
}
