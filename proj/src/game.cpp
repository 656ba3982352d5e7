#include "cokv/game.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"

#include "cokv/rng.hpp"

namespace cokv {

using nlohmann::json;

EvaluationError::EvaluationError(Reason reason, CoalitionMask coalition,
                                 const std::string& what)
    : Error(Kind::kEvaluation,
            std::string(cokv::to_string(reason)) + " evaluating " +
                cokv::to_string(coalition) + ": " + what),
      reason_(reason),
      coalition_(std::move(coalition)) {}

const char* to_string(EvaluationError::Reason reason) {
  switch (reason) {
    case EvaluationError::Reason::kTransport: return "transport error";
    case EvaluationError::Reason::kTimeout: return "timeout";
    case EvaluationError::Reason::kMalformed: return "malformed reply";
    case EvaluationError::Reason::kRange: return "range violation";
    case EvaluationError::Reason::kIdMismatch: return "id mismatch";
  }
  return "unknown";
}

UtilityOracle::UtilityOracle(int n, double u_min, double u_max)
    : n_(n), u_min_(u_min), u_max_(u_max) {
  if (n < 1) throw ConfigError("oracle needs at least one player");
  if (!(u_min <= u_max) || !std::isfinite(u_min) || !std::isfinite(u_max)) {
    throw ConfigError("invalid utility range [" + std::to_string(u_min) + ", " +
                      std::to_string(u_max) + "]");
  }
}

double UtilityOracle::utility(const CoalitionMask& s) const {
  if (s.n() != n_) {
    throw ConfigError("coalition has " + std::to_string(s.n()) +
                      " players, oracle expects " + std::to_string(n_));
  }
  const double u = evaluate(s);
  calls_.fetch_add(1, std::memory_order_relaxed);
  // Closed-form ranges are sums of the same terms in another order, so allow
  // rounding slack.
  const double slack = 1e-12 * std::max({1.0, std::abs(u_min_), std::abs(u_max_)});
  if (!(u >= u_min_ - slack && u <= u_max_ + slack)) {
    throw EvaluationError(EvaluationError::Reason::kRange, s,
                          "utility " + std::to_string(u) + " outside [" +
                              std::to_string(u_min_) + ", " +
                              std::to_string(u_max_) + "]");
  }
  return u;
}

double complementary_contribution(const UtilityOracle& oracle, const CoalitionMask& s) {
  return oracle.utility(s) - oracle.utility(s.complement());
}

std::string fingerprint_of(std::string_view text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[i] = kDigits[h & 0xF];
  return out;
}

namespace {

std::string fingerprint_json(const char* family, const json& payload) {
  return fingerprint_of(json{{"family", family}, {"params", payload}}.dump());
}

double sum_member_weights(const std::vector<double>& weights, const CoalitionMask& s) {
  double total = 0.0;
  for (int p : s.members()) total += weights[p];
  return total;
}

}  // namespace

// --- Additive -------------------------------------------------------------

namespace {
std::pair<double, double> additive_range(const std::vector<double>& w) {
  double lo = 0.0, hi = 0.0;
  for (double x : w) (x < 0 ? lo : hi) += x;
  return {lo, hi};
}
}  // namespace

AdditiveGame::AdditiveGame(std::vector<double> weights)
    : UtilityOracle(static_cast<int>(weights.size()), additive_range(weights).first,
                    additive_range(weights).second),
      weights_(std::move(weights)) {}

double AdditiveGame::evaluate(const CoalitionMask& s) const {
  return sum_member_weights(weights_, s);
}

std::string AdditiveGame::fingerprint() const {
  return fingerprint_json("additive", json{{"weights", weights_}});
}

// --- Symmetric ------------------------------------------------------------

namespace {
int symmetric_n(const std::vector<double>& table) {
  if (table.size() < 2) throw ConfigError("symmetric table needs n+1 >= 2 entries");
  return static_cast<int>(table.size()) - 1;
}
}  // namespace

SymmetricGame::SymmetricGame(std::vector<double> by_size)
    : UtilityOracle(symmetric_n(by_size),
                    *std::min_element(by_size.begin(), by_size.end()),
                    *std::max_element(by_size.begin(), by_size.end())),
      by_size_(std::move(by_size)) {}

double SymmetricGame::evaluate(const CoalitionMask& s) const { return by_size_[s.count()]; }

std::string SymmetricGame::fingerprint() const {
  return fingerprint_json("symmetric", json{{"by_size", by_size_}});
}

// --- Weighted voting ------------------------------------------------------

WeightedVotingGame::WeightedVotingGame(std::vector<double> weights, double quota)
    : UtilityOracle(static_cast<int>(weights.size()), 0.0, 1.0),
      weights_(std::move(weights)),
      quota_(quota) {}

double WeightedVotingGame::evaluate(const CoalitionMask& s) const {
  return sum_member_weights(weights_, s) >= quota_ ? 1.0 : 0.0;
}

std::string WeightedVotingGame::fingerprint() const {
  return fingerprint_json("weighted-voting", json{{"weights", weights_}, {"quota", quota_}});
}

// --- Saboteur -------------------------------------------------------------

namespace {

std::vector<double> saboteur_deltas(int n, const SaboteurParams& p) {
  if (n < 1) throw ConfigError("saboteur game needs n >= 1");
  std::vector<double> delta(n, 0.0);
  std::vector<bool> seen(n, false);
  auto apply = [&](const std::vector<std::pair<int, double>>& entries, bool helpful) {
    for (const auto& [player, amount] : entries) {
      if (player < 0 || player >= n) {
        throw ConfigError("saboteur player index " + std::to_string(player) +
                          " out of range");
      }
      if (seen[player]) {
        throw ConfigError("saboteur player " + std::to_string(player) +
                          " listed more than once");
      }
      if (helpful ? amount < 0.0 : amount > 0.0) {
        throw ConfigError(helpful ? "helpful gains must be >= 0"
                                  : "harmful penalties must be <= 0");
      }
      seen[player] = true;
      delta[player] = amount;
    }
  };
  apply(p.helpful, true);
  apply(p.harmful, false);
  return delta;
}

std::pair<double, double> saboteur_range(int n, const SaboteurParams& p) {
  double lo = p.base, hi = p.base;
  for (double d : saboteur_deltas(n, p)) (d < 0 ? lo : hi) += d;
  return {lo, hi};
}

}  // namespace

SaboteurGame::SaboteurGame(int n, SaboteurParams params)
    : UtilityOracle(n, saboteur_range(n, params).first, saboteur_range(n, params).second),
      params_(std::move(params)),
      delta_(saboteur_deltas(n, params_)) {}

double SaboteurGame::evaluate(const CoalitionMask& s) const {
  return params_.base + sum_member_weights(delta_, s);
}

std::string SaboteurGame::fingerprint() const {
  return fingerprint_json("saboteur", json{{"n", n()},
                                           {"base", params_.base},
                                           {"helpful", params_.helpful},
                                           {"harmful", params_.harmful}});
}

// --- Random ---------------------------------------------------------------

RandomGame::RandomGame(int n, std::uint64_t seed) : UtilityOracle(n, 0.0, 1.0), seed_(seed) {}

double RandomGame::evaluate(const CoalitionMask& s) const {
  SplitMix64 rng(derive_seed(seed_, s.hash(), static_cast<std::uint64_t>(s.n())));
  return rng.unit();
}

std::string RandomGame::fingerprint() const {
  return fingerprint_json("random", json{{"n", n()}, {"seed", seed_}});
}

// --- GameSpec -------------------------------------------------------------

const char* to_string(GameFamily family) {
  switch (family) {
    case GameFamily::kAdditive: return "additive";
    case GameFamily::kSymmetric: return "symmetric";
    case GameFamily::kWeightedVoting: return "weighted-voting";
    case GameFamily::kSaboteur: return "saboteur";
    case GameFamily::kExternal: return "external";
  }
  return "unknown";
}

PlayerSet GameSpec::players() const {
  if (labels.empty()) return PlayerSet(n);
  return PlayerSet(labels);
}

void GameSpec::validate() const {
  if (n < 1) throw ConfigError("game needs n >= 1");
  if (!labels.empty() && static_cast<int>(labels.size()) != n) {
    throw ConfigError("expected " + std::to_string(n) + " labels, got " +
                      std::to_string(labels.size()));
  }
  (void)players();
  auto arity = [&](std::size_t got, std::size_t want, const char* what) {
    if (got != want) {
      throw ConfigError(std::string(what) + " has " + std::to_string(got) +
                        " entries, expected " + std::to_string(want));
    }
  };
  switch (family) {
    case GameFamily::kAdditive:
      arity(std::get<AdditiveParams>(params).weights.size(), n, "additive weights");
      break;
    case GameFamily::kSymmetric:
      arity(std::get<SymmetricParams>(params).by_size.size(), n + 1, "symmetric table");
      break;
    case GameFamily::kWeightedVoting:
      arity(std::get<WeightedVotingParams>(params).weights.size(), n, "voting weights");
      break;
    case GameFamily::kSaboteur:
      (void)saboteur_deltas(n, std::get<SaboteurParams>(params));
      break;
    case GameFamily::kExternal: {
      const auto& ext = std::get<ExternalParams>(params);
      if (ext.command.empty() && ext.exchange_directory.empty()) {
        throw ConfigError("external oracle needs a command or an exchange directory");
      }
      if (!(ext.timeout_seconds > 0)) throw ConfigError("timeout must be positive");
      break;
    }
  }
  if (range && !(range->first <= range->second)) {
    throw ConfigError("utility range must satisfy min <= max");
  }
}

namespace {

std::vector<std::pair<int, double>> parse_player_amounts(const json& j, const char* key) {
  std::vector<std::pair<int, double>> out;
  if (!j.contains(key)) return out;
  for (const auto& entry : j.at(key)) {
    if (entry.is_array()) {
      out.emplace_back(entry.at(0).get<int>(), entry.at(1).get<double>());
    } else {
      const double amount = entry.contains("gain") ? entry.at("gain").get<double>()
                                                   : entry.at("penalty").get<double>();
      out.emplace_back(entry.at("player").get<int>(), amount);
    }
  }
  return out;
}

}  // namespace

GameSpec parse_game_spec(const std::string& json_text) {
  GameSpec spec;
  try {
    const json doc = json::parse(json_text);
    const std::string family = doc.at("family").get<std::string>();
    const json params = doc.value("params", json::object());
    if (doc.contains("n")) spec.n = doc.at("n").get<int>();
    if (doc.contains("labels")) {
      for (const auto& l : doc.at("labels")) {
        if (l.is_string()) {
          spec.labels.push_back(PlayerLabel::Opaque(l.get<std::string>()));
        } else if (l.is_array()) {
          spec.labels.push_back(PlayerLabel::HeadGroup(l.at(0).get<int>(), l.at(1).get<int>()));
        } else {
          spec.labels.push_back(
              PlayerLabel::HeadGroup(l.at("layer").get<int>(), l.at("group").get<int>()));
        }
      }
    }
    if (doc.contains("range")) {
      spec.range = std::make_pair(doc.at("range").at(0).get<double>(),
                                  doc.at("range").at(1).get<double>());
    }
    if (family == "additive") {
      spec.family = GameFamily::kAdditive;
      spec.params = AdditiveParams{params.at("weights").get<std::vector<double>>()};
    } else if (family == "symmetric") {
      spec.family = GameFamily::kSymmetric;
      spec.params = SymmetricParams{params.at("by_size").get<std::vector<double>>()};
    } else if (family == "weighted-voting") {
      spec.family = GameFamily::kWeightedVoting;
      spec.params = WeightedVotingParams{params.at("weights").get<std::vector<double>>(),
                                         params.at("quota").get<double>()};
    } else if (family == "saboteur") {
      spec.family = GameFamily::kSaboteur;
      spec.params = SaboteurParams{params.value("base", 0.0),
                                   parse_player_amounts(params, "helpful"),
                                   parse_player_amounts(params, "harmful")};
    } else if (family == "external") {
      spec.family = GameFamily::kExternal;
      ExternalParams ext;
      ext.command = params.value("command", std::string{});
      ext.exchange_directory = params.value("directory", std::string{});
      ext.timeout_seconds = params.value("timeout_s", ext.timeout_seconds);
      ext.cache_path = params.value("cache", std::string{});
      spec.params = ext;
    } else {
      throw ConfigError("unknown game family '" + family + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid game spec: ") + e.what());
  }
  if (spec.n == 0) {
    // n may be omitted when the payload determines it.
    if (auto* a = std::get_if<AdditiveParams>(&spec.params)) {
      spec.n = static_cast<int>(a->weights.size());
    } else if (auto* s = std::get_if<SymmetricParams>(&spec.params)) {
      spec.n = static_cast<int>(s->by_size.size()) - 1;
    } else if (auto* v = std::get_if<WeightedVotingParams>(&spec.params)) {
      spec.n = static_cast<int>(v->weights.size());
    }
  }
  spec.validate();
  return spec;
}

std::string game_spec_to_json(const GameSpec& spec) {
  json doc;
  doc["family"] = to_string(spec.family);
  doc["n"] = spec.n;
  if (!spec.labels.empty()) {
    json labels = json::array();
    for (const auto& l : spec.labels) {
      if (l.layer && l.group) {
        labels.push_back({{"layer", *l.layer}, {"group", *l.group}});
      } else {
        labels.push_back(l.name);
      }
    }
    doc["labels"] = labels;
  }
  if (spec.range) doc["range"] = {spec.range->first, spec.range->second};
  json params;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, AdditiveParams>) {
          params["weights"] = p.weights;
        } else if constexpr (std::is_same_v<T, SymmetricParams>) {
          params["by_size"] = p.by_size;
        } else if constexpr (std::is_same_v<T, WeightedVotingParams>) {
          params["weights"] = p.weights;
          params["quota"] = p.quota;
        } else if constexpr (std::is_same_v<T, SaboteurParams>) {
          params["base"] = p.base;
          params["helpful"] = json::array();
          for (const auto& [pl, g] : p.helpful) params["helpful"].push_back({{"player", pl}, {"gain", g}});
          params["harmful"] = json::array();
          for (const auto& [pl, g] : p.harmful) params["harmful"].push_back({{"player", pl}, {"penalty", g}});
        } else {
          params["command"] = p.command;
          params["directory"] = p.exchange_directory;
          params["timeout_s"] = p.timeout_seconds;
          params["cache"] = p.cache_path;
        }
      },
      spec.params);
  doc["params"] = params;
  return doc.dump();
}

namespace {

// Wraps a built-in game with an overriding declared range.
class RangeOverride final : public UtilityOracle {
 public:
  RangeOverride(std::unique_ptr<UtilityOracle> inner, double lo, double hi)
      : UtilityOracle(inner->n(), lo, hi), inner_(std::move(inner)) {}
  std::string fingerprint() const override { return inner_->fingerprint(); }

 protected:
  double evaluate(const CoalitionMask& s) const override { return inner_->utility(s); }

 private:
  std::unique_ptr<UtilityOracle> inner_;
};

}  // namespace

std::unique_ptr<UtilityOracle> make_builtin_oracle(const GameSpec& spec) {
  spec.validate();
  std::unique_ptr<UtilityOracle> oracle;
  switch (spec.family) {
    case GameFamily::kAdditive:
      oracle = std::make_unique<AdditiveGame>(std::get<AdditiveParams>(spec.params).weights);
      break;
    case GameFamily::kSymmetric:
      oracle = std::make_unique<SymmetricGame>(std::get<SymmetricParams>(spec.params).by_size);
      break;
    case GameFamily::kWeightedVoting: {
      const auto& p = std::get<WeightedVotingParams>(spec.params);
      oracle = std::make_unique<WeightedVotingGame>(p.weights, p.quota);
      break;
    }
    case GameFamily::kSaboteur:
      oracle = std::make_unique<SaboteurGame>(spec.n, std::get<SaboteurParams>(spec.params));
      break;
    case GameFamily::kExternal:
      throw ConfigError("external games are built by the oracle bridge");
  }
  if (spec.range) {
    const auto [lo, hi] = *spec.range;
    if (lo > oracle->u_min() || hi < oracle->u_max()) {
      throw ConfigError("declared range does not cover the game's attainable utilities");
    }
    oracle = std::make_unique<RangeOverride>(std::move(oracle), lo, hi);
  }
  return oracle;
}

}  // namespace cokv
